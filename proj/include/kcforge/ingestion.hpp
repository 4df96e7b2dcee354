#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kcforge/error.hpp"
#include "kcforge/types.hpp"

namespace kcforge {

namespace detail {

inline std::string chomp_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  return line;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

inline std::int64_t parse_non_negative_int(const std::string& text,
                                           std::size_t line_no,
                                           const std::string& field) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw ValidationError("line " + std::to_string(line_no) + ": field '" +
                          field + "' must be a non-negative integer, got '" +
                          text + "'");
  }
  try {
    return std::stoll(text);
  } catch (const std::exception&) {
    throw ValidationError("line " + std::to_string(line_no) + ": field '" +
                          field + "' out of range: '" + text + "'");
  }
}

}  // namespace detail

// Line-delimited JSON, one object per line with keys `id`, `stem`, `choices`.
// Returns records in file order. Throws on the first problem; never returns
// partial results.
inline std::vector<Mcq> parse_mcqs(std::istream& source) {
  std::vector<Mcq> mcqs;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    line = detail::chomp_cr(line);
    if (line.empty()) {
      continue;
    }
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": malformed JSON: " + ex.what());
    }
    if (!record.is_object() || !record.contains("id") ||
        !record.contains("stem") || !record.contains("choices") ||
        !record["id"].is_string() || !record["stem"].is_string() ||
        !record["choices"].is_array()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected an object with string 'id', string 'stem' "
                       "and array 'choices'");
    }
    Mcq mcq;
    mcq.id = record["id"].get<std::string>();
    mcq.stem = record["stem"].get<std::string>();
    if (mcq.id.empty()) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": field 'id' is empty");
    }
    if (mcq.stem.empty()) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": field 'stem' is empty");
    }
    for (const auto& choice : record["choices"]) {
      if (!choice.is_string() || choice.get<std::string>().empty()) {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": 'choices' entries must be non-empty strings");
      }
      mcq.choices.push_back(choice.get<std::string>());
    }
    if (mcq.choices.size() < 2) {
      throw ValidationError("line " + std::to_string(line_no) + ": question '" +
                            mcq.id + "' has " +
                            std::to_string(mcq.choices.size()) +
                            " choice(s); at least 2 required");
    }
    if (!seen_ids.insert(mcq.id).second) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": duplicate question id '" + mcq.id + "'");
    }
    mcqs.push_back(std::move(mcq));
  }
  return mcqs;
}

// Tab-separated steps with header `student_id\titem_id\torder\toutcome`.
// Output is sorted by (student_id, order).
inline std::vector<StepRecord> parse_steps(std::istream& source) {
  static const std::string kHeader = "student_id\titem_id\torder\toutcome";
  std::string line;
  if (!std::getline(source, line) || detail::chomp_cr(line) != kHeader) {
    throw ParseError("steps file must start with header '" + kHeader + "'");
  }
  std::vector<StepRecord> steps;
  std::set<std::pair<std::string, std::int64_t>> seen;
  std::size_t line_no = 1;
  while (std::getline(source, line)) {
    ++line_no;
    line = detail::chomp_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 "
                       "tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    StepRecord step;
    step.student_id = fields[0];
    step.item_id = fields[1];
    if (step.student_id.empty() || step.item_id.empty()) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": student_id and item_id must be non-empty");
    }
    step.order = detail::parse_non_negative_int(fields[2], line_no, "order");
    if (fields[3] == "0") {
      step.outcome = 0;
    } else if (fields[3] == "1") {
      step.outcome = 1;
    } else {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": field 'outcome' must be 0 or 1, got '" +
                            fields[3] + "'");
    }
    if (!seen.insert({step.student_id, step.order}).second) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": duplicate (student_id, order) = ('" +
                            step.student_id + "', " +
                            std::to_string(step.order) + ")");
    }
    steps.push_back(std::move(step));
  }
  std::sort(steps.begin(), steps.end(), [](const StepRecord& a,
                                           const StepRecord& b) {
    if (a.student_id != b.student_id) {
      return a.student_id < b.student_id;
    }
    return a.order < b.order;
  });
  return steps;
}

// Tab-separated KC model with header `item_id\tkc_label`; rows with the same
// item accumulate into that item's label set.
inline KcModel parse_kc_model(std::istream& source, const std::string& name) {
  static const std::string kHeader = "item_id\tkc_label";
  std::string line;
  if (!std::getline(source, line) || detail::chomp_cr(line) != kHeader) {
    throw ParseError("KC model file must start with header '" + kHeader + "'");
  }
  KcModel::Mapping mapping;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(source, line)) {
    ++line_no;
    line = detail::chomp_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto fields = detail::split_tabs(line);
    if (fields.size() != 2) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 2 "
                       "tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    if (fields[0].empty()) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": empty item_id");
    }
    if (fields[1].empty()) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": empty kc_label for item '" + fields[0] + "'");
    }
    mapping[fields[0]].insert(fields[1]);
    ++rows;
  }
  if (rows == 0) {
    throw ValidationError("KC model '" + name +
                          "' has no rows (header-only file)");
  }
  return KcModel(name, std::move(mapping));
}

// Emits the same TSV parse_kc_model reads, rows sorted by (item_id, kc_label).
inline void write_kc_model(const KcModel& model, std::ostream& sink) {
  sink << "item_id\tkc_label\n";
  for (const auto& [item, labels] : model.mapping()) {
    for (const auto& label : labels) {
      if (label.find('\t') != std::string::npos ||
          label.find('\n') != std::string::npos) {
        throw ValidationError("KC label contains tab or newline and cannot be "
                              "serialized: '" + label + "'");
      }
      sink << item << '\t' << label << '\n';
    }
  }
  if (!sink) {
    throw IoError("write failure while serializing KC model '" + model.name() +
                  "'");
  }
}

}  // namespace kcforge
