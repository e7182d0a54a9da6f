#include "pronref/refclass.hpp"

#include <string>

#include "pronref/error.hpp"
#include "pronref/text.hpp"

namespace pronref {

std::string_view to_string(RefClass c) {
  switch (c) {
    case RefClass::Board: return "BOARD";
    case RefClass::Country: return "COUNTRY";
    case RefClass::Generic: return "GENERIC";
    case RefClass::Govern: return "GOVERN";
    case RefClass::Parl: return "PARL";
    case RefClass::Party: return "PARTY";
    case RefClass::People: return "PEOPLE";
    case RefClass::SpecPers: return "SPECPERS";
    case RefClass::Union: return "UNION";
  }
  return "?";
}

std::optional<RefClass> parse_ref_class(std::string_view name) {
  std::string key = ascii_upper(trim(name));
  for (RefClass c : kAllClasses) {
    if (key == to_string(c)) return c;
  }
  if (key == "GOVERNMENT") return RefClass::Govern;
  if (key == "PARLIAMENT" || key == "PARLAMENT") return RefClass::Parl;
  if (key == "SPECPER" || key == "SPEC_PERS" || key == "SPEC_PERSON" || key == "SPECIFIC_PERSONS")
    return RefClass::SpecPers;
  return std::nullopt;
}

RefClass ref_class_from_string(std::string_view name) {
  if (auto c = parse_ref_class(name)) return *c;
  throw DataError("unknown referent class '" + std::string(name) + "'");
}

std::size_t argmax_canonical(const ClassVector& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace pronref
