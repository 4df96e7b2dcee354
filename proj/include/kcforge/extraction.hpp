#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kcforge/chat.hpp"
#include "kcforge/error.hpp"
#include "kcforge/prompts.hpp"
#include "kcforge/types.hpp"

namespace kcforge {

// Everything observed while extracting one MCQ's KC: the prompts, the raw
// responses, the parsed topic lists and the final pick. `off_list` marks a
// final answer that matched none of the reworded topics.
struct ExtractionTrace {
  std::string mcq_id;
  std::string turn1_prompt, turn1_response;
  std::string turn2_prompt, turn2_response;
  std::string turn3_prompt, turn3_response;
  std::vector<std::string> topics;
  std::vector<std::string> reworded_topics;
  std::string chosen_kc;
  bool off_list = false;
};

inline bool operator==(const ExtractionTrace& a, const ExtractionTrace& b) {
  return a.mcq_id == b.mcq_id && a.turn1_prompt == b.turn1_prompt &&
         a.turn1_response == b.turn1_response &&
         a.turn2_prompt == b.turn2_prompt &&
         a.turn2_response == b.turn2_response &&
         a.turn3_prompt == b.turn3_prompt &&
         a.turn3_response == b.turn3_response && a.topics == b.topics &&
         a.reworded_topics == b.reworded_topics &&
         a.chosen_kc == b.chosen_kc && a.off_list == b.off_list;
}

// Raised when a turn fails mid-extraction; carries whatever part of the
// trace was already filled in so callers can persist it.
class ExtractionError : public Error {
 public:
  enum class Kind { kFormat, kTransport };

  ExtractionError(const std::string& what, Kind kind, ExtractionTrace partial)
      : Error(what), kind_(kind), partial_(std::move(partial)) {}

  Kind kind() const { return kind_; }
  const ExtractionTrace& partial_trace() const { return partial_; }

 private:
  Kind kind_;
  ExtractionTrace partial_;
};

namespace detail {

inline std::string trim(const std::string& text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end &&
         std::isspace(static_cast<unsigned char>(text[begin]))) {
    ++begin;
  }
  while (end > begin &&
         std::isspace(static_cast<unsigned char>(text[end - 1]))) {
    --end;
  }
  return text.substr(begin, end - begin);
}

// "1." / "12)" style enumerators.
inline std::optional<std::string> strip_numbered_marker(const std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
    ++i;
  }
  if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')')) {
    return std::nullopt;
  }
  return trim(line.substr(i + 1));
}

// "- item" / "* item" / "+ item" bullets (marker must be followed by space).
inline std::optional<std::string> strip_bullet_marker(const std::string& line) {
  if (line.size() < 2 ||
      (line[0] != '-' && line[0] != '*' && line[0] != '+') ||
      !std::isspace(static_cast<unsigned char>(line[1]))) {
    return std::nullopt;
  }
  return trim(line.substr(2));
}

// Peels matched **bold**, *italic* and _underscore_ wrappers.
inline std::string strip_emphasis(std::string text) {
  text = trim(text);
  bool changed = true;
  while (changed && text.size() >= 2) {
    changed = false;
    if (text.size() >= 4 && text.compare(0, 2, "**") == 0 &&
        text.compare(text.size() - 2, 2, "**") == 0) {
      text = trim(text.substr(2, text.size() - 4));
      changed = true;
    } else if ((text.front() == '*' && text.back() == '*') ||
               (text.front() == '_' && text.back() == '_')) {
      text = trim(text.substr(1, text.size() - 2));
      changed = true;
    }
  }
  return text;
}

inline std::string strip_any_marker(const std::string& line) {
  if (auto numbered = strip_numbered_marker(line)) {
    return *numbered;
  }
  if (auto bulleted = strip_bullet_marker(line)) {
    return *bulleted;
  }
  return line;
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

// Longest common substring length between two strings, case already folded.
inline std::size_t longest_common_substring(const std::string& a,
                                            const std::string& b) {
  if (a.empty() || b.empty()) {
    return 0;
  }
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> curr(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1]) {
        curr[j] = prev[j - 1] + 1;
        best = std::max(best, curr[j]);
      } else {
        curr[j] = 0;
      }
    }
    std::swap(prev, curr);
  }
  return best;
}

inline std::string to_lower(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return text;
}

}  // namespace detail

// Extracts exactly five topics from a turn-1/turn-2 response. Recognizes
// numbered lists, then bulleted lists, then plain non-empty lines; strips
// markers, surrounding whitespace and bold/italic markup. Anything but
// exactly five topics is a format error carrying the raw response.
inline std::vector<std::string> parse_topics(const std::string& response) {
  if (detail::trim(response).empty()) {
    throw FormatError("topic list response is empty", response);
  }
  std::vector<std::string> numbered;
  std::vector<std::string> bulleted;
  std::vector<std::string> plain;
  for (const auto& raw_line : detail::split_lines(response)) {
    const std::string line = detail::trim(raw_line);
    if (line.empty()) {
      continue;
    }
    if (auto item = detail::strip_numbered_marker(line)) {
      const std::string cleaned = detail::strip_emphasis(*item);
      if (!cleaned.empty()) {
        numbered.push_back(cleaned);
      }
      continue;
    }
    if (auto item = detail::strip_bullet_marker(line)) {
      const std::string cleaned = detail::strip_emphasis(*item);
      if (!cleaned.empty()) {
        bulleted.push_back(cleaned);
      }
      continue;
    }
    const std::string cleaned = detail::strip_emphasis(line);
    if (!cleaned.empty()) {
      plain.push_back(cleaned);
    }
  }
  // First list family present wins; a preamble line does not disqualify a
  // numbered or bulleted list.
  const std::vector<std::string>* candidates = nullptr;
  if (!numbered.empty()) {
    candidates = &numbered;
  } else if (!bulleted.empty()) {
    candidates = &bulleted;
  } else {
    candidates = &plain;
  }
  if (candidates->size() != 5) {
    throw FormatError("expected exactly 5 topics, found " +
                          std::to_string(candidates->size()),
                      response);
  }
  return *candidates;
}

struct KcSelection {
  std::string kc;
  bool off_list = false;
};

// Picks the reworded topic the final response refers to. A topic counts as
// present when its longest case-insensitive common substring with the
// response covers at least 60% of the topic; among those, the longest
// overlap wins (earlier topic on ties). With no qualifying topic the
// response itself, stripped of list markers and collapsed to one line,
// becomes the KC and the trace is flagged off-list.
inline KcSelection select_kc(const std::string& turn3_response,
                             const std::vector<std::string>& reworded) {
  if (reworded.size() != 5) {
    throw ContractError("select_kc requires exactly 5 reworded topics");
  }
  const std::string trimmed = detail::trim(turn3_response);
  if (trimmed.empty()) {
    throw FormatError("final-turn response is empty", turn3_response);
  }
  const std::string response_lc = detail::to_lower(turn3_response);
  std::size_t best_index = reworded.size();
  std::size_t best_overlap = 0;
  for (std::size_t i = 0; i < reworded.size(); ++i) {
    const std::string topic_lc = detail::to_lower(reworded[i]);
    const std::size_t overlap =
        detail::longest_common_substring(response_lc, topic_lc);
    if (overlap * 10 < topic_lc.size() * 6) {
      continue;  // below the 60% presence bar
    }
    if (best_index == reworded.size() || overlap > best_overlap) {
      best_index = i;
      best_overlap = overlap;
    }
  }
  if (best_index < reworded.size()) {
    return {reworded[best_index], false};
  }
  // Off-list: clean the response into a single-line label.
  std::string joined;
  for (const auto& raw_line : detail::split_lines(trimmed)) {
    const std::string cleaned =
        detail::strip_emphasis(detail::strip_any_marker(detail::trim(raw_line)));
    if (cleaned.empty()) {
      continue;
    }
    if (!joined.empty()) {
      joined += ' ';
    }
    joined += cleaned;
  }
  if (joined.empty()) {
    throw FormatError("final-turn response reduced to nothing after stripping",
                      turn3_response);
  }
  return {joined, true};
}

// Runs the three turns for one MCQ. Each request carries the full prior
// conversation. Turn failures surface as ExtractionError with the partial
// trace attached; no later turn is attempted after a failure.
inline ExtractionTrace extract_kc(const Mcq& mcq, ChatClient& client) {
  ExtractionTrace trace;
  trace.mcq_id = mcq.id;

  auto call = [&](const std::vector<ChatMessage>& messages) -> std::string {
    try {
      return client.complete(messages);
    } catch (const TransportError& ex) {
      throw ExtractionError(std::string("MCQ '") + mcq.id + "': " + ex.what(),
                            ExtractionError::Kind::kTransport, trace);
    }
  };
  auto parse = [&](const std::string& response,
                   const char* stage) -> std::vector<std::string> {
    try {
      return parse_topics(response);
    } catch (const FormatError& ex) {
      throw ExtractionError(std::string("MCQ '") + mcq.id + "' " + stage +
                                ": " + ex.what(),
                            ExtractionError::Kind::kFormat, trace);
    }
  };

  trace.turn1_prompt = prompts::build_turn1_prompt(mcq);
  std::vector<ChatMessage> messages{{Role::kUser, trace.turn1_prompt}};
  trace.turn1_response = call(messages);
  trace.topics = parse(trace.turn1_response, "turn 1");

  messages.push_back({Role::kAssistant, trace.turn1_response});
  trace.turn2_prompt = prompts::build_turn2_prompt(trace.turn1_response);
  messages.push_back({Role::kUser, trace.turn2_prompt});
  trace.turn2_response = call(messages);
  trace.reworded_topics = parse(trace.turn2_response, "turn 2");

  messages.push_back({Role::kAssistant, trace.turn2_response});
  trace.turn3_prompt = prompts::build_turn3_prompt();
  messages.push_back({Role::kUser, trace.turn3_prompt});
  trace.turn3_response = call(messages);
  try {
    const KcSelection selection = select_kc(trace.turn3_response,
                                            trace.reworded_topics);
    trace.chosen_kc = selection.kc;
    trace.off_list = selection.off_list;
  } catch (const FormatError& ex) {
    throw ExtractionError(std::string("MCQ '") + mcq.id + "' turn 3: " +
                              ex.what(),
                          ExtractionError::Kind::kFormat, trace);
  }
  return trace;
}

// Result of one MCQ inside a batch: the trace (partial on failure) and the
// error message when extraction failed.
struct ExtractionOutcome {
  ExtractionTrace trace;
  std::optional<std::string> error;
};

struct ExtractionBatch {
  KcModel model;                            // successful MCQs only
  std::vector<ExtractionOutcome> outcomes;  // one per MCQ, input order
  std::size_t failure_count = 0;
};

struct ExtractAllOptions {
  int parallelism = 1;
  double failure_threshold = 0.10;  // batch fails when exceeded
  std::string model_name = "extracted";
};

class ExtractionBatchError : public Error {
 public:
  ExtractionBatchError(const std::string& what,
                       std::vector<ExtractionOutcome> outcomes)
      : Error(what), outcomes_(std::move(outcomes)) {}

  const std::vector<ExtractionOutcome>& outcomes() const { return outcomes_; }

 private:
  std::vector<ExtractionOutcome> outcomes_;
};

// Extracts every MCQ with a bounded worker pool. Per-MCQ failures are
// collected, never dropped; the whole batch fails only when the failure
// fraction exceeds the threshold. Output depends only on the inputs, not on
// completion order.
inline ExtractionBatch extract_all(const std::vector<Mcq>& mcqs,
                                   ChatClient& client,
                                   const ExtractAllOptions& options = {}) {
  if (options.parallelism < 1) {
    throw ValidationError("extract_all: parallelism must be >= 1");
  }
  if (options.failure_threshold < 0.0 || options.failure_threshold > 1.0) {
    throw ValidationError("extract_all: failure threshold must be in [0, 1]");
  }

  std::vector<ExtractionOutcome> outcomes(mcqs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= mcqs.size()) {
        return;
      }
      try {
        outcomes[i].trace = extract_kc(mcqs[i], client);
      } catch (const ExtractionError& ex) {
        outcomes[i].trace = ex.partial_trace();
        outcomes[i].error = ex.what();
      } catch (const Error& ex) {
        outcomes[i].trace.mcq_id = mcqs[i].id;
        outcomes[i].error = ex.what();
      }
    }
  };

  const int workers = static_cast<int>(
      std::min<std::size_t>(options.parallelism, std::max<std::size_t>(mcqs.size(), 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) {
      pool.emplace_back(worker);
    }
    for (auto& thread : pool) {
      thread.join();
    }
  }

  ExtractionBatch batch;
  KcModel::Mapping mapping;
  for (const auto& outcome : outcomes) {
    if (!outcome.error) {
      mapping[outcome.trace.mcq_id] = {outcome.trace.chosen_kc};
    } else {
      ++batch.failure_count;
    }
  }
  if (!mcqs.empty() &&
      static_cast<double>(batch.failure_count) >
          options.failure_threshold * static_cast<double>(mcqs.size())) {
    std::string message = "extraction failed for " +
                          std::to_string(batch.failure_count) + " of " +
                          std::to_string(mcqs.size()) + " MCQs:";
    for (const auto& outcome : outcomes) {
      if (outcome.error) {
        message += "\n  " + *outcome.error;
      }
    }
    throw ExtractionBatchError(message, std::move(outcomes));
  }
  batch.model = KcModel(options.model_name, std::move(mapping));
  batch.outcomes = std::move(outcomes);
  return batch;
}

inline nlohmann::json trace_to_json(const ExtractionTrace& trace) {
  return {{"mcq_id", trace.mcq_id},
          {"turn1_prompt", trace.turn1_prompt},
          {"turn1_response", trace.turn1_response},
          {"turn2_prompt", trace.turn2_prompt},
          {"turn2_response", trace.turn2_response},
          {"turn3_prompt", trace.turn3_prompt},
          {"turn3_response", trace.turn3_response},
          {"topics", trace.topics},
          {"reworded_topics", trace.reworded_topics},
          {"chosen_kc", trace.chosen_kc},
          {"off_list", trace.off_list}};
}

// One JSON object per MCQ, input order, partial traces included with their
// error message.
inline void write_traces(const std::vector<ExtractionOutcome>& outcomes,
                         std::ostream& sink) {
  for (const auto& outcome : outcomes) {
    nlohmann::json line = trace_to_json(outcome.trace);
    if (outcome.error) {
      line["error"] = *outcome.error;
    }
    sink << line.dump() << '\n';
  }
  if (!sink) {
    throw IoError("write failure while serializing extraction traces");
  }
}

}  // namespace kcforge
