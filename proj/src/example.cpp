#include "steerlab/example.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace steerlab {

using nlohmann::json;

std::string task_name(Task t) {
  switch (t) {
    case Task::Numeric: return "numeric";
    case Task::Multihop: return "multihop";
    case Task::Summarization: return "summarization";
    case Task::WordProblem: return "wordproblem";
  }
  throw std::logic_error("task_name: bad task");
}

Task task_from_name(const std::string& name) {
  if (name == "numeric") return Task::Numeric;
  if (name == "multihop") return Task::Multihop;
  if (name == "summarization") return Task::Summarization;
  if (name == "wordproblem") return Task::WordProblem;
  throw std::invalid_argument("unknown task: " + name);
}

Answer Answer::make_spans(std::vector<std::string> s) {
  Answer a;
  a.kind = Kind::Spans;
  a.spans = std::move(s);
  return a;
}

Answer Answer::make_number(std::string n) {
  Answer a;
  a.kind = Kind::Number;
  a.number = std::move(n);
  return a;
}

Answer Answer::make_yesno(bool y) {
  Answer a;
  a.kind = Kind::YesNo;
  a.yes = y;
  return a;
}

Answer Answer::make_sentences(std::vector<int> idx) {
  Answer a;
  a.kind = Kind::Sentences;
  a.sentences = std::move(idx);
  return a;
}

std::string Answer::display() const {
  switch (kind) {
    case Kind::Spans: {
      std::string out;
      for (size_t i = 0; i < spans.size(); ++i) {
        if (i) out += " ; ";
        out += spans[i];
      }
      return out;
    }
    case Kind::Number: return number;
    case Kind::YesNo: return yes ? "yes" : "no";
    case Kind::Sentences: {
      std::string out;
      for (size_t i = 0; i < sentences.size(); ++i) {
        if (i) out += " ";
        out += std::to_string(sentences[i]);
      }
      return out;
    }
  }
  return "";
}

namespace {

json answer_to_json(const Answer& a) {
  switch (a.kind) {
    case Answer::Kind::Spans: return {{"type", "spans"}, {"spans", a.spans}};
    case Answer::Kind::Number: return {{"type", "number"}, {"value", a.number}};
    case Answer::Kind::YesNo: return {{"type", "yesno"}, {"value", a.yes ? "yes" : "no"}};
    case Answer::Kind::Sentences: return {{"type", "sentences"}, {"indices", a.sentences}};
  }
  throw std::logic_error("answer_to_json: bad kind");
}

Answer answer_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "spans") return Answer::make_spans(j.at("spans").get<std::vector<std::string>>());
  if (type == "number") return Answer::make_number(j.at("value").get<std::string>());
  if (type == "yesno") return Answer::make_yesno(j.at("value").get<std::string>() == "yes");
  if (type == "sentences") return Answer::make_sentences(j.at("indices").get<std::vector<int>>());
  throw std::invalid_argument("unknown answer type: " + type);
}

}  // namespace

json example_to_json(const Example& e) {
  return json{{"id", e.id},
              {"task", task_name(e.task)},
              {"sentences", e.sentences},
              {"question", e.question},
              {"answer", answer_to_json(e.answer)},
              {"arguments", e.arguments},
              {"supporting_facts", e.supporting_facts},
              {"oracle_summary", e.oracle_summary}};
}

Example example_from_json(const json& j) {
  Example e;
  e.id = j.at("id").get<std::string>();
  e.task = task_from_name(j.at("task").get<std::string>());
  e.sentences = j.at("sentences").get<std::vector<std::string>>();
  e.question = j.at("question").get<std::string>();
  e.answer = answer_from_json(j.at("answer"));
  e.arguments = j.at("arguments").get<std::vector<std::string>>();
  e.supporting_facts = j.at("supporting_facts").get<std::vector<int>>();
  e.oracle_summary = j.at("oracle_summary").get<std::vector<int>>();
  return e;
}

std::string dataset_to_jsonl(const std::vector<Example>& examples) {
  std::string out = json{{"schema", kDatasetSchema}}.dump();
  out += "\n";
  for (const auto& e : examples) {
    out += example_to_json(e).dump();
    out += "\n";
  }
  return out;
}

std::vector<Example> dataset_from_jsonl(const std::string& text) {
  std::vector<Example> out;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (first) {
      first = false;
      if (j.contains("schema")) {
        const auto schema = j.at("schema").get<std::string>();
        if (schema != kDatasetSchema)
          throw std::invalid_argument("unsupported dataset schema: " + schema);
        continue;
      }
      // Headerless files from external converters are accepted as v1.
    }
    out.push_back(example_from_json(j));
  }
  return out;
}

void write_dataset(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << dataset_to_jsonl(examples);
}

std::vector<Example> read_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return dataset_from_jsonl(ss.str());
}

}  // namespace steerlab
