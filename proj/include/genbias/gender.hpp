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

#include <array>
#include <string>
#include <string_view>

#include "genbias/error.hpp"

namespace genbias {

enum class Gender { male, female, undefined };

inline constexpr std::array<Gender, 2> kBinaryGenders = {Gender::male,
                                                         Gender::female};

inline constexpr std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::male:
      return "male";
    case Gender::female:
      return "female";
    case Gender::undefined:
      break;
  }
  return "undefined";
}

inline Gender parse_gender(std::string_view s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  if (s == "undefined") return Gender::undefined;
  throw ArgumentError("unknown gender label '" + std::string(s) + "'");
}

inline constexpr Gender opposite(Gender g) {
  if (g == Gender::male) return Gender::female;
  if (g == Gender::female) return Gender::male;
  return Gender::undefined;
}

inline constexpr bool is_defined(Gender g) { return g != Gender::undefined; }

}  // namespace genbias
