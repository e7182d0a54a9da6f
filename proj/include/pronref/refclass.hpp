#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace pronref {

/// The nine referent classes of a first-person-plural pronoun. The declared
/// order is canonical: it fixes column order in every matrix and is the last
/// resort for breaking ties.
enum class RefClass : std::uint8_t {
  Board,
  Country,
  Generic,
  Govern,
  Parl,
  Party,
  People,
  SpecPers,
  Union,
};

inline constexpr std::size_t kNumClasses = 9;

inline constexpr std::array<RefClass, kNumClasses> kAllClasses{
    RefClass::Board, RefClass::Country, RefClass::Generic, RefClass::Govern, RefClass::Parl,
    RefClass::Party, RefClass::People,  RefClass::SpecPers, RefClass::Union,
};

using ClassCounts = std::array<std::size_t, kNumClasses>;
using ClassVector = std::array<double, kNumClasses>;
using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

constexpr std::size_t index_of(RefClass c) { return static_cast<std::size_t>(c); }
constexpr RefClass class_at(std::size_t i) { return kAllClasses.at(i); }

/// Canonical upper-case name, e.g. "SPECPERS".
std::string_view to_string(RefClass c);

/// Accepts canonical names case-insensitively plus the spellings used in
/// published tables (GOVERNMENT, PARLIAMENT, SPEC_PERSON, SPECPER, ...).
std::optional<RefClass> parse_ref_class(std::string_view name);

/// Like parse_ref_class but throws DataError on unknown names.
RefClass ref_class_from_string(std::string_view name);

/// Index of the largest entry; earlier (canonical) classes win exact ties.
std::size_t argmax_canonical(const ClassVector& v);

}  // namespace pronref
