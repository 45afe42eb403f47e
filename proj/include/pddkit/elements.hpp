#pragma once

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace pddkit {

inline constexpr int kMaxAtomicNumber = 118;

inline constexpr std::array<std::string_view, kMaxAtomicNumber + 1> kElementSymbols = {
    "",   "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
    "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac",
    "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf",
    "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

inline bool is_valid_atomic_number(int z) { return z >= 1 && z <= kMaxAtomicNumber; }

inline std::string_view element_symbol(int z) {
  return is_valid_atomic_number(z) ? kElementSymbols[static_cast<std::size_t>(z)] : std::string_view{};
}

/// Exact (case-sensitive) symbol lookup. Hydrogen isotopes D and T map to 1.
inline std::optional<int> atomic_number(std::string_view symbol) {
  if (symbol == "D" || symbol == "T") return 1;
  for (int z = 1; z <= kMaxAtomicNumber; ++z) {
    if (kElementSymbols[static_cast<std::size_t>(z)] == symbol) return z;
  }
  return std::nullopt;
}

/// Resolves the element prefix of a CIF type symbol or site label such as
/// "Fe2+", "SI1", "O2-" or "Cl_a". Two-letter symbols win over one-letter ones.
inline std::optional<int> element_from_label(std::string_view label) {
  std::string letters;
  for (char ch : label) {
    if (!std::isalpha(static_cast<unsigned char>(ch)) || letters.size() == 2) break;
    letters.push_back(ch);
  }
  if (letters.empty()) return std::nullopt;
  letters[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(letters[0])));
  if (letters.size() == 2) {
    letters[1] = static_cast<char>(std::tolower(static_cast<unsigned char>(letters[1])));
    if (auto z = atomic_number(letters)) return z;
  }
  return atomic_number(letters.substr(0, 1));
}

}  // namespace pddkit
