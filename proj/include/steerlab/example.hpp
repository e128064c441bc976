#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace steerlab {

enum class Task { Numeric, Multihop, Summarization, WordProblem };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

// Gold output; exactly one alternative is populated, by kind.
struct Answer {
  enum class Kind { Spans, Number, YesNo, Sentences };

  Kind kind = Kind::Spans;
  std::vector<std::string> spans;  // verbatim input spans
  std::string number;              // canonical decimal digit string
  bool yes = false;
  std::vector<int> sentences;  // oracle summary sentence indices

  static Answer make_spans(std::vector<std::string> s);
  static Answer make_number(std::string n);
  static Answer make_yesno(bool y);
  static Answer make_sentences(std::vector<int> idx);

  std::string display() const;  // human-readable form used by token-level F1
};

// One task instance with its gold explanation annotations.
struct Example {
  std::string id;
  Task task = Task::Numeric;
  std::vector<std::string> sentences;  // pre-split context sentences
  std::string question;                // empty for summarization
  Answer answer;
  std::vector<std::string> arguments;   // computation arguments (numeric task)
  std::vector<int> supporting_facts;    // sentence indices (multihop task)
  std::vector<int> oracle_summary;      // sentence indices (summarization task)
};

inline constexpr const char* kDatasetSchema = "steerlab-examples-v1";

nlohmann::json example_to_json(const Example& e);
Example example_from_json(const nlohmann::json& j);

// JSON Lines with a leading schema header line.
std::string dataset_to_jsonl(const std::vector<Example>& examples);
std::vector<Example> dataset_from_jsonl(const std::string& text);
void write_dataset(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> read_dataset(const std::string& path);

}  // namespace steerlab
