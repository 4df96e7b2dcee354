#pragma once

#include <string>

#include "kcforge/error.hpp"
#include "kcforge/types.hpp"

namespace kcforge::prompts {

// The three turn templates below are byte-frozen; tests/golden/ holds the
// reference copies. Several lines end with a space before the newline —
// that is intentional, do not "fix" the whitespace.

inline constexpr const char kTurn1Template[] =
    "Below there is a multiple-choice question intended for a master's level \n"
    "audience with existing prior knowledge on the subject of E-learning. \n"
    "The question is used as a low-stakes assessment as part of a master's level \n"
    "E-learning course that covers similar content.\n"
    "\n"
    "If this question was presented in a textbook for a master's level \n"
    "E-learning course, what five domain-specific low-level detailed topics \n"
    "would the page cover? Note that the question is for a college audience \n"
    "with existing prior knowledge in E-learning.\n"
    "Question text:\n"
    "{stem}\n"
    "{choices}\n";

inline constexpr const char kTurn2Template[] =
    "Based on these topics, reword them to begin with action words from \n"
    "Bloom's Revised Taxonomy, while keeping them domain-specific, low-level, \n"
    "and detailed.\n";

inline constexpr const char kTurn3Template[] =
    "Of these topics, which is the most relevant to the question?\n";

namespace detail {

inline void replace_once(std::string& text, const std::string& placeholder,
                         const std::string& value) {
  const std::size_t pos = text.find(placeholder);
  if (pos == std::string::npos) {
    throw ContractError("prompt template is missing placeholder '" +
                        placeholder + "'");
  }
  text.replace(pos, placeholder.size(), value);
}

}  // namespace detail

// First-turn template with `{stem}` and `{choices}` substituted; choices are
// joined one per line.
inline std::string build_turn1_prompt(const Mcq& mcq) {
  if (mcq.id.empty() || mcq.stem.empty() || mcq.choices.size() < 2) {
    throw ValidationError("build_turn1_prompt: MCQ '" + mcq.id +
                          "' is not valid");
  }
  std::string choices;
  for (std::size_t i = 0; i < mcq.choices.size(); ++i) {
    if (i > 0) {
      choices += '\n';
    }
    choices += mcq.choices[i];
  }
  std::string prompt = kTurn1Template;
  detail::replace_once(prompt, "{stem}", mcq.stem);
  detail::replace_once(prompt, "{choices}", choices);
  return prompt;
}

// Second-turn template. The prior conversation travels in the message list;
// the response is taken only to enforce the non-empty precondition.
inline std::string build_turn2_prompt(const std::string& turn1_response) {
  if (turn1_response.empty()) {
    throw ValidationError(
        "build_turn2_prompt: turn-1 response must be non-empty");
  }
  return kTurn2Template;
}

inline std::string build_turn3_prompt() { return kTurn3Template; }

}  // namespace kcforge::prompts
