#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kcforge/error.hpp"

namespace kcforge {

// One multiple-choice question.
struct Mcq {
  std::string id;
  std::string stem;
  std::vector<std::string> choices;  // ordered, at least two
};

// One student attempt on an item. `order` is the per-student chronological
// rank and comes from the data, not from row position.
struct StepRecord {
  std::string student_id;
  std::string item_id;
  std::int64_t order = 0;
  int outcome = 0;  // 0 incorrect, 1 correct
};

inline bool operator==(const StepRecord& a, const StepRecord& b) {
  return a.student_id == b.student_id && a.item_id == b.item_id &&
         a.order == b.order && a.outcome == b.outcome;
}

// A KC model: item id -> non-empty set of KC labels, plus the derived set of
// all distinct labels. Immutable once constructed; construction validates.
class KcModel {
 public:
  using Mapping = std::map<std::string, std::set<std::string>>;

  KcModel() = default;

  KcModel(std::string name, Mapping mapping)
      : name_(std::move(name)), mapping_(std::move(mapping)) {
    for (const auto& [item, labels] : mapping_) {
      if (item.empty()) {
        throw ValidationError("KC model contains an empty item id");
      }
      if (labels.empty()) {
        throw ValidationError("item '" + item + "' is mapped to no KC labels");
      }
      for (const auto& label : labels) {
        if (label.empty()) {
          throw ValidationError("item '" + item + "' carries an empty KC label");
        }
        labels_.insert(label);
      }
    }
  }

  const std::string& name() const { return name_; }
  const Mapping& mapping() const { return mapping_; }
  const std::set<std::string>& labels() const { return labels_; }

  std::size_t item_count() const { return mapping_.size(); }
  std::size_t label_count() const { return labels_.size(); }

  bool contains_item(const std::string& item_id) const {
    return mapping_.count(item_id) > 0;
  }

  const std::set<std::string>& labels_for(const std::string& item_id) const {
    auto it = mapping_.find(item_id);
    if (it == mapping_.end()) {
      throw ContractError("item '" + item_id + "' is not in KC model '" +
                          name_ + "'");
    }
    return it->second;
  }

  // Number of items each label is attached to, used for canonical-label
  // selection when merging.
  std::map<std::string, std::size_t> label_usage() const {
    std::map<std::string, std::size_t> usage;
    for (const auto& [item, labels] : mapping_) {
      for (const auto& label : labels) {
        ++usage[label];
      }
    }
    return usage;
  }

  friend bool operator==(const KcModel& a, const KcModel& b) {
    return a.name_ == b.name_ && a.mapping_ == b.mapping_;
  }

 private:
  std::string name_;
  Mapping mapping_;
  std::set<std::string> labels_;
};

}  // namespace kcforge
