/*
 * Copyright 2026 The genbias Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genbias/gender.hpp"
#include "genbias/lexicon.hpp"
#include "genbias/text.hpp"

namespace genbias {

/// Gender label of an image from its captions, read as one paragraph:
/// feminine words only -> female, masculine only -> male, otherwise
/// (both or neither) undefined.
inline Gender label_captions(std::span<const std::string> captions,
                             const GenderLexicon& lexicon) {
  bool masculine = false;
  bool feminine = false;
  for (const auto& caption : captions) {
    for (const auto& s : alpha_runs(caption)) {
      auto m = lexicon.lookup(
          std::string_view(caption).substr(s.begin, s.end - s.begin));
      if (!m) continue;
      (m->gender == Gender::male ? masculine : feminine) = true;
    }
  }
  if (masculine == feminine) return Gender::undefined;
  return masculine ? Gender::male : Gender::female;
}

namespace detail {

// Words that follow an object pronoun ("next to her and", "gives him a")
// rather than a possessed noun ("her teeth").
inline bool is_object_follower(std::string_view w) {
  static constexpr std::array<std::string_view, 72> kFollowers = {
      "a",       "about",   "across",  "after",   "again",   "against",
      "all",     "along",   "an",      "and",     "any",     "are",
      "around",  "as",      "at",      "away",    "back",    "be",
      "because", "been",    "before",  "behind",  "being",   "beside",
      "between", "both",    "but",     "by",      "down",    "during",
      "each",    "for",     "from",    "had",     "has",     "have",
      "here",    "how",     "if",      "in",      "inside",  "into",
      "is",      "it",      "its",     "like",    "near",    "next",
      "nor",     "of",      "off",     "on",      "onto",    "or",
      "out",     "outside", "over",    "so",      "some",    "than",
      "that",    "the",     "then",    "there",   "these",   "this",
      "those",   "through", "to",      "too",     "up",      "with",
  };
  return std::binary_search(kFollowers.begin(), kFollowers.end(), w);
}

// True when the token at spans[idx] is directly followed (spaces only) by a
// word that reads as the noun phrase it determines.
inline bool in_determiner_position(std::string_view text,
                                   const std::vector<TokenSpan>& spans,
                                   std::size_t idx) {
  if (idx + 1 >= spans.size()) return false;
  const auto gap = text.substr(spans[idx].end,
                               spans[idx + 1].begin - spans[idx].end);
  if (gap.empty() || gap.find_first_not_of(' ') != std::string_view::npos) {
    return false;
  }
  const auto next = to_lower(text.substr(
      spans[idx + 1].begin, spans[idx + 1].end - spans[idx + 1].begin));
  return !is_object_follower(next);
}

inline const std::string& replacement_for(const GenderLexicon& lexicon,
                                          const GenderLexicon::Match& m,
                                          bool determiner, LexiconColumn col) {
  const auto obj = lexicon.object_row();
  const auto poss = lexicon.possessive_row();
  if (determiner && obj && poss &&
      (m.entry == *obj || (m.entry == *poss && m.gender == Gender::male))) {
    // Possessive determiner forms: his / her / their.
    switch (col) {
      case LexiconColumn::masculine:
        return lexicon.word(*poss, LexiconColumn::masculine);
      case LexiconColumn::feminine:
        return lexicon.word(*obj, LexiconColumn::feminine);
      case LexiconColumn::neutral:
        return lexicon.word(*poss, LexiconColumn::neutral);
    }
  }
  return lexicon.word(m.entry, col);
}

// Rewrites every gendered token into column `col`. Tokens already of
// `keep` gender are left byte-identical.
inline std::string rewrite_gendered(std::string_view text,
                                    const GenderLexicon& lexicon,
                                    LexiconColumn col,
                                    std::optional<Gender> keep) {
  const auto spans = alpha_runs(text);
  std::string out;
  out.reserve(text.size() + 16);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto word = text.substr(spans[i].begin, spans[i].end - spans[i].begin);
    const auto m = lexicon.lookup(word);
    if (!m || (keep && m->gender == *keep)) continue;
    std::string repl = replacement_for(
        lexicon, *m, in_determiner_position(text, spans, i), col);
    if (word[0] >= 'A' && word[0] <= 'Z') repl[0] = ascii_upper(repl[0]);
    out.append(text.substr(pos, spans[i].begin - pos));
    out.append(repl);
    pos = spans[i].end;
  }
  out.append(text.substr(pos));
  return out;
}

}  // namespace detail

/// Replaces every masculine or feminine lexicon word with its neutral form.
/// Non-gendered text is preserved byte for byte; a capitalized source word
/// yields a capitalized replacement.
inline std::string neutralize_caption(std::string_view text,
                                      const GenderLexicon& lexicon) {
  return detail::rewrite_gendered(text, lexicon, LexiconColumn::neutral,
                                  std::nullopt);
}

/// Rewrites gendered words into the target gender ("his cat" -> "her cat").
inline std::string swap_caption_gender(std::string_view text, Gender target,
                                       const GenderLexicon& lexicon) {
  if (!is_defined(target)) {
    throw ArgumentError("swap target must be male or female");
  }
  return detail::rewrite_gendered(
      text, lexicon,
      target == Gender::male ? LexiconColumn::masculine
                             : LexiconColumn::feminine,
      target);
}

/// True when no lexicon masculine or feminine word occurs in the text.
inline bool is_gender_neutral(std::string_view text,
                              const GenderLexicon& lexicon) {
  for (const auto& s : alpha_runs(text)) {
    if (lexicon.is_gendered(text.substr(s.begin, s.end - s.begin))) return false;
  }
  return true;
}

}  // namespace genbias
