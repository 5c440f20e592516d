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

#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "fixtures.hpp"
#include "genbias/caption.hpp"
#include "genbias/error.hpp"
#include "genbias/lexicon.hpp"
#include "genbias/text.hpp"

using namespace genbias;

namespace {
const GenderLexicon& lex() {
  static const GenderLexicon l = GenderLexicon::builtin();
  return l;
}
Gender label(std::vector<std::string> caps) { return label_captions(caps, lex()); }
}  // namespace

TEST(Text, TokenizeSplitsOnNonAlpha) {
  EXPECT_EQ(tokenize("A man's hat, 2 dogs!"),
            (std::vector<std::string>{"a", "man", "s", "hat", "dogs"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("123 -- ...").empty());
}

TEST(Lexicon, BuiltinMatchesShippedFile) {
  const auto file = GenderLexicon::load(std::string(GENBIAS_DATA_DIR) + "/gender_lexicon.tsv");
  ASSERT_EQ(file.entries().size(), lex().entries().size());
  for (std::size_t i = 0; i < file.entries().size(); ++i) {
    EXPECT_EQ(file.entries()[i].masculine, lex().entries()[i].masculine);
    EXPECT_EQ(file.entries()[i].feminine, lex().entries()[i].feminine);
    EXPECT_EQ(file.entries()[i].neutral, lex().entries()[i].neutral);
  }
}

TEST(Lexicon, LookupIsCaseInsensitive) {
  ASSERT_TRUE(lex().lookup("WoMaN"));
  EXPECT_EQ(lex().lookup("WoMaN")->gender, Gender::female);
  EXPECT_EQ(lex().lookup("He")->gender, Gender::male);
  EXPECT_FALSE(lex().lookup("person"));
  EXPECT_FALSE(lex().lookup("mannequin"));
}

TEST(Lexicon, RejectsDuplicateGenderedWord) {
  EXPECT_THROW(GenderLexicon({{"man", "woman", "person"}, {"man", "lady", "person"}}),
               Error);
  EXPECT_THROW(GenderLexicon({{"man", "woman", "man"}}), Error);
  EXPECT_THROW(GenderLexicon({{"man", "", "person"}}), Error);
}

TEST(Lexicon, SaveLoadRoundTrip) {
  fx::TempDir dir("lexicon");
  lex().save(dir / "l.tsv");
  const auto back = GenderLexicon::load(dir / "l.tsv");
  EXPECT_EQ(back.entries().size(), 14u);
  EXPECT_EQ(back.entries()[13].feminine, "her");
}

TEST(Lexicon, LoadRejectsBadLine) {
  fx::TempDir dir("lexicon-bad");
  fx::write_file(dir / "l.tsv", "man\twoman\n");
  EXPECT_THROW(GenderLexicon::load(dir / "l.tsv"), Error);
}

TEST(Label, FemaleOnly) {
  EXPECT_EQ(label({"The woman brushes her teeth in the bathroom."}), Gender::female);
}

TEST(Label, BothGendersUndefined) {
  EXPECT_EQ(label({"A man and a woman", "people on a bench"}), Gender::undefined);
  EXPECT_EQ(label({"A man walks", "A woman walks"}), Gender::undefined);
}

TEST(Label, NeitherUndefined) {
  EXPECT_EQ(label({"A dog on a couch"}), Gender::undefined);
  EXPECT_EQ(label({}), Gender::undefined);
}

TEST(Label, WholeTokensOnly) {
  EXPECT_EQ(label({"A mannequin in a shop window"}), Gender::undefined);
  EXPECT_EQ(label({"A man's hat"}), Gender::male);
  EXPECT_EQ(label({"SHE is running"}), Gender::female);
}

TEST(Neutralize, ReferenceExamples) {
  EXPECT_EQ(neutralize_caption("The woman brushes her teeth in the bathroom.", lex()),
            "The person brushes their teeth in the bathroom.");
  EXPECT_EQ(neutralize_caption("A man sleeping with his cat next to him.", lex()),
            "A person sleeping with their cat next to them.");
  EXPECT_EQ(neutralize_caption(
                "Two women and two girls in makeup and one is talking on a cellphone.", lex()),
            "Two people and two children in makeup and one is talking on a cellphone.");
}

TEST(Neutralize, NoGenderedWordsUnchanged) {
  const std::string c = "A red bus parked by the curb,  next to 3 trees.";
  EXPECT_EQ(neutralize_caption(c, lex()), c);
}

TEST(Neutralize, CapitalizationAndPossessive) {
  EXPECT_EQ(neutralize_caption("She holds a kite.", lex()), "They holds a kite.");
  EXPECT_EQ(neutralize_caption("WOMAN with umbrella", lex()), "Person with umbrella");
  EXPECT_EQ(neutralize_caption("the man's bike", lex()), "the person's bike");
}

TEST(Neutralize, ObjectPronounHer) {
  EXPECT_EQ(neutralize_caption("A dog next to her.", lex()), "A dog next to them.");
  EXPECT_EQ(neutralize_caption("He gives her a ball", lex()), "They gives them a ball");
  EXPECT_EQ(neutralize_caption("She rides her bike", lex()), "They rides their bike");
}

TEST(Swap, ReferenceExample) {
  EXPECT_EQ(swap_caption_gender("A man sleeping with his cat", Gender::female, lex()),
            "A woman sleeping with her cat");
  EXPECT_EQ(swap_caption_gender("A woman sleeping with her cat", Gender::male, lex()),
            "A man sleeping with his cat");
}

TEST(Swap, NoGenderedWordsUnchanged) {
  const std::string c = "A giraffe eating leaves.";
  EXPECT_EQ(swap_caption_gender(c, Gender::male, lex()), c);
}

TEST(Swap, AlreadyTargetUnchanged) {
  EXPECT_EQ(swap_caption_gender("A woman and her sister", Gender::female, lex()),
            "A woman and her sister");
  EXPECT_EQ(swap_caption_gender("A man and a woman", Gender::male, lex()), "A man and a man");
}

TEST(Swap, Idempotent) {
  const std::string c = "The boy hands his father a bat and he smiles at him.";
  const auto once = swap_caption_gender(c, Gender::female, lex());
  EXPECT_EQ(swap_caption_gender(once, Gender::female, lex()), once);
  EXPECT_EQ(once, "The girl hands her mother a bat and she smiles at her.");
}

TEST(Swap, UndefinedTargetRejected) {
  EXPECT_THROW(swap_caption_gender("a man", Gender::undefined, lex()), ArgumentError);
}

TEST(Neutral, DetectsGenderedWords) {
  EXPECT_TRUE(is_gender_neutral("A person with a dog", lex()));
  EXPECT_FALSE(is_gender_neutral("A Lady with a dog", lex()));
}
