#pragma once

// Reader and writer for the subset of CIF 1.1 needed to load crystal
// structures: data blocks, tag/value pairs, loops, quoted strings, text
// fields and comments. Symmetry operators, when present, are expanded into
// a P1 motif.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pddkit/elements.hpp"
#include "pddkit/error.hpp"
#include "pddkit/geometry.hpp"

namespace pddkit::cif {

struct Loop {
  std::vector<std::string> tags;  // lower-cased
  std::vector<std::vector<std::string>> rows;
  int line = 0;  // line of the loop_ keyword

  /// Column index of a tag, or -1.
  int column(std::string_view tag) const {
    for (std::size_t i = 0; i < tags.size(); ++i)
      if (tags[i] == tag) return static_cast<int>(i);
    return -1;
  }
};

struct Block {
  std::string name;
  std::map<std::string, std::string> items;  // keys lower-cased
  std::vector<Loop> loops;

  const std::string* find(std::string_view tag) const {
    auto it = items.find(std::string(tag));
    return it == items.end() ? nullptr : &it->second;
  }

  const Loop* find_loop(std::string_view tag) const {
    for (const auto& loop : loops)
      if (loop.column(tag) >= 0) return &loop;
    return nullptr;
  }
};

struct Document {
  std::vector<Block> blocks;
  std::string source_path;
};

namespace detail {

enum class TokenKind { DataHeader, Loop, Tag, Value, Ignored };

struct Token {
  TokenKind kind;
  std::string text;
  int line;
  int column;
};

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  return lower(s.substr(0, prefix.size())) == prefix;
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> tokens;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '\n') {
        advance();
        continue;
      }
      if (is_space(c)) {
        advance();
        continue;
      }
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
        continue;
      }
      if (c == ';' && column_ == 1) {
        tokens.push_back(text_field());
        continue;
      }
      if (c == '\'' || c == '"') {
        tokens.push_back(quoted(c));
        continue;
      }
      tokens.push_back(bare());
    }
    return tokens;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  Token text_field() {
    const int line = line_, column = column_;
    advance();  // opening ';'
    std::string value;
    for (;;) {
      if (pos_ >= text_.size()) throw CifSyntaxError("unterminated text field", line, column);
      if (text_[pos_] == '\n') {
        advance();
        if (pos_ < text_.size() && text_[pos_] == ';') {
          advance();
          break;
        }
        value.push_back('\n');
        continue;
      }
      value.push_back(text_[pos_]);
      advance();
    }
    if (!value.empty() && value.back() == '\r') value.pop_back();
    return {TokenKind::Value, value, line, column};
  }

  // A quote only closes the string when followed by whitespace or end of input.
  Token quoted(char quote) {
    const int line = line_, column = column_;
    advance();
    std::string value;
    for (;;) {
      if (pos_ >= text_.size() || text_[pos_] == '\n') {
        throw CifSyntaxError("unterminated quoted string", line, column);
      }
      const char c = text_[pos_];
      if (c == quote && (pos_ + 1 >= text_.size() || is_space(text_[pos_ + 1]))) {
        advance();
        break;
      }
      value.push_back(c);
      advance();
    }
    return {TokenKind::Value, value, line, column};
  }

  Token bare() {
    const int line = line_, column = column_;
    std::string word;
    while (pos_ < text_.size() && !is_space(text_[pos_])) {
      word.push_back(text_[pos_]);
      advance();
    }
    if (starts_with_ci(word, "data_")) return {TokenKind::DataHeader, word.substr(5), line, column};
    const std::string lw = lower(word);
    if (lw == "loop_") return {TokenKind::Loop, word, line, column};
    if (starts_with_ci(word, "save_") || lw == "global_" || lw == "stop_") {
      return {TokenKind::Ignored, word, line, column};
    }
    if (word[0] == '_') return {TokenKind::Tag, lw, line, column};
    return {TokenKind::Value, word, line, column};
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

}  // namespace detail

/// Tokenizes and structures CIF text. Throws CifSyntaxError on malformed input.
inline Document parse_cif(std::string_view text) {
  using detail::TokenKind;
  const auto tokens = detail::Lexer(text).run();
  Document doc;
  std::size_t i = 0;
  auto current = [&](const detail::Token& tok) -> Block& {
    if (doc.blocks.empty()) throw CifSyntaxError("content before the first data_ block", tok.line, tok.column);
    return doc.blocks.back();
  };
  while (i < tokens.size()) {
    const auto& tok = tokens[i];
    switch (tok.kind) {
      case TokenKind::Ignored:
        ++i;
        break;
      case TokenKind::DataHeader:
        doc.blocks.push_back(Block{tok.text, {}, {}});
        ++i;
        break;
      case TokenKind::Tag: {
        Block& block = current(tok);
        if (i + 1 >= tokens.size() || tokens[i + 1].kind != TokenKind::Value) {
          throw CifSyntaxError("tag " + tok.text + " has no value", tok.line, tok.column);
        }
        block.items[tok.text] = tokens[i + 1].text;
        i += 2;
        break;
      }
      case TokenKind::Loop: {
        Block& block = current(tok);
        Loop loop;
        loop.line = tok.line;
        ++i;
        while (i < tokens.size() && tokens[i].kind == TokenKind::Tag) loop.tags.push_back(tokens[i++].text);
        if (loop.tags.empty()) throw CifSyntaxError("loop_ without tags", tok.line, tok.column);
        std::vector<std::string> values;
        while (i < tokens.size() && tokens[i].kind == TokenKind::Value) values.push_back(tokens[i++].text);
        if (values.size() % loop.tags.size() != 0) {
          throw CifSyntaxError("loop declared at line " + std::to_string(tok.line) + " has " +
                                   std::to_string(loop.tags.size()) + " tags but " + std::to_string(values.size()) +
                                   " values",
                               tok.line, tok.column);
        }
        for (std::size_t r = 0; r < values.size(); r += loop.tags.size()) {
          loop.rows.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(r),
                                 values.begin() + static_cast<std::ptrdiff_t>(r + loop.tags.size()));
        }
        block.loops.push_back(std::move(loop));
        break;
      }
      case TokenKind::Value:
        throw CifSyntaxError("value without a tag", tok.line, tok.column);
    }
  }
  if (doc.blocks.empty()) throw CifSyntaxError("no data_ block found", 1, 1);
  return doc;
}

inline Document read_cif_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  Document doc = parse_cif(ss.str());
  doc.source_path = path;
  return doc;
}

/// Parses a CIF numeric value, dropping a trailing standard uncertainty such
/// as the "(5)" of "4.123(5)". Returns nullopt for "?", "." and non-numbers.
inline std::optional<double> parse_number(std::string_view s) {
  if (s.empty() || s == "?" || s == ".") return std::nullopt;
  if (const auto paren = s.find('('); paren != std::string_view::npos) {
    if (s.back() != ')') return std::nullopt;
    s = s.substr(0, paren);
  }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

/// Exact rational with 64-bit parts, enough for symmetry-operator constants.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t n, std::int64_t d) {
    if (d == 0) throw Error(ErrorKind::InvalidInput, "zero denominator in symmetry operator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    const std::int64_t g = std::gcd(n, d);
    return g == 0 ? Rational{0, 1} : Rational{n / g, d / g};
  }

  Rational operator+(const Rational& o) const { return make(num * o.den + o.num * den, den * o.den); }
  Rational operator*(const Rational& o) const { return make(num * o.num, den * o.den); }
  bool operator==(const Rational& o) const = default;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Affine map on fractional coordinates, f' = rotation * f + translation.
struct SymmetryOperator {
  std::array<std::array<Rational, 3>, 3> rotation{};
  std::array<Rational, 3> translation{};

  Vec3 apply(const Vec3& f) const {
    Vec3 out;
    for (int r = 0; r < 3; ++r) {
      double acc = translation[static_cast<std::size_t>(r)].value();
      for (int c = 0; c < 3; ++c) acc += rotation[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].value() * f[c];
      out[r] = acc;
    }
    return out;
  }
};

namespace detail {

class SymopParser {
 public:
  explicit SymopParser(std::string_view text) : text_(text) {}

  SymmetryOperator run() {
    SymmetryOperator op;
    for (std::size_t row = 0; row < 3; ++row) {
      parse_component(op, row);
      skip_space();
      if (row < 2) {
        if (pos_ >= text_.size() || text_[pos_] != ',') fail("expected ','");
        ++pos_;
      }
    }
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters");
    return op;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorKind::InvalidInput, "bad symmetry operator '" + std::string(text_) + "': " + why);
  }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  static int axis(char c) {
    switch (c) {
      case 'x': case 'X': return 0;
      case 'y': case 'Y': return 1;
      case 'z': case 'Z': return 2;
      default: return -1;
    }
  }

  // digits[.digits][/digits]
  Rational number() {
    std::int64_t num = 0, den = 1;
    int digits = 0;
    auto take_digit = [&](std::int64_t& target) {
      if (++digits > 15) fail("constant has too many digits");
      target = target * 10 + (text_[pos_++] - '0');
    };
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) take_digit(num);
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        take_digit(num);
        den *= 10;
      }
    }
    if (digits == 0) fail("expected a number");
    Rational r = Rational::make(num, den);
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == '/') {
      ++pos_;
      skip_space();
      std::int64_t d = 0;
      int dd = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        if (++dd > 15) fail("denominator has too many digits");
        d = d * 10 + (text_[pos_++] - '0');
      }
      if (dd == 0 || d == 0) fail("bad denominator");
      r = r * Rational::make(1, d);
    }
    return r;
  }

  void parse_component(SymmetryOperator& op, std::size_t row) {
    bool any = false;
    for (;;) {
      skip_space();
      if (pos_ >= text_.size() || text_[pos_] == ',') break;
      std::int64_t sign = 1;
      if (text_[pos_] == '+' || text_[pos_] == '-') {
        sign = text_[pos_] == '-' ? -1 : 1;
        ++pos_;
        skip_space();
      } else if (any) {
        fail("expected '+' or '-'");
      }
      if (pos_ >= text_.size()) fail("dangling sign");
      const Rational s = Rational::make(sign, 1);
      if (const int a = axis(text_[pos_]); a >= 0) {
        ++pos_;
        auto& slot = op.rotation[row][static_cast<std::size_t>(a)];
        slot = slot + s;
      } else {
        Rational value = number();
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == '*') {
          ++pos_;
          skip_space();
        }
        if (pos_ < text_.size() && axis(text_[pos_]) >= 0) {
          auto& slot = op.rotation[row][static_cast<std::size_t>(axis(text_[pos_++]))];
          slot = slot + s * value;
        } else {
          op.translation[row] = op.translation[row] + s * value;
        }
      }
      any = true;
    }
    if (!any) fail("empty component");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses operators such as "x,y,z", "-y+1/2, x-y, z+2/3" or "1/2+X,Y,Z".
inline SymmetryOperator parse_symmetry_operator(std::string_view text) { return detail::SymopParser(text).run(); }

/// Fractional tolerance under which two generated sites count as the same site.
inline constexpr double kDuplicateSiteTolerance = 1e-4;

struct Site {
  Vec3 frac;
  int species;
};

/// Applies every operator to every site, wraps into the unit cell, and keeps the
/// first of any group of same-species sites within `tolerance` under periodic wrap.
inline std::vector<Site> expand_symmetry(const std::vector<Site>& sites, const std::vector<SymmetryOperator>& ops,
                                         double tolerance = kDuplicateSiteTolerance) {
  std::vector<Site> out;
  auto duplicate = [&](const Site& s) {
    return std::any_of(out.begin(), out.end(), [&](const Site& o) {
      if (o.species != s.species) return false;
      Vec3 d = o.frac - s.frac;
      for (int c = 0; c < 3; ++c) d[c] -= std::round(d[c]);
      return d.cwiseAbs().maxCoeff() <= tolerance;
    });
  };
  for (const auto& site : sites) {
    for (const auto& op : ops) {
      Site image{wrap_fraction(op.apply(site.frac)), site.species};
      if (!duplicate(image)) out.push_back(image);
    }
  }
  return out;
}

namespace detail {

inline double required_number(const Block& block, const char* tag) {
  const std::string* raw = block.find(tag);
  if (!raw) throw Error(ErrorKind::MissingTag, std::string("missing tag ") + tag);
  const auto v = parse_number(*raw);
  if (!v) throw Error(ErrorKind::InvalidInput, std::string("tag ") + tag + " is not a number: " + *raw);
  return *v;
}

inline std::vector<SymmetryOperator> symmetry_operators(const Block& block) {
  std::vector<SymmetryOperator> ops;
  for (const char* tag : {"_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"}) {
    if (const Loop* loop = block.find_loop(tag)) {
      const int col = loop->column(tag);
      for (const auto& row : loop->rows) ops.push_back(parse_symmetry_operator(row[static_cast<std::size_t>(col)]));
      return ops;
    }
    if (const std::string* single = block.find(tag)) {
      ops.push_back(parse_symmetry_operator(*single));
      return ops;
    }
  }
  return ops;
}

}  // namespace detail

/// Builds a PeriodicSet from a parsed block (default: the first block with cell
/// lengths). The set id is the block name.
inline PeriodicSet to_periodic_set(const Block& block) {
  const LatticeBasis basis = cell_params_to_basis(
      detail::required_number(block, "_cell_length_a"), detail::required_number(block, "_cell_length_b"),
      detail::required_number(block, "_cell_length_c"), detail::required_number(block, "_cell_angle_alpha"),
      detail::required_number(block, "_cell_angle_beta"), detail::required_number(block, "_cell_angle_gamma"));

  const Loop* atoms = block.find_loop("_atom_site_fract_x");
  if (!atoms) throw Error(ErrorKind::MissingTag, "missing tag _atom_site_fract_x");
  std::array<int, 3> xyz{};
  const char* coord_tags[3] = {"_atom_site_fract_x", "_atom_site_fract_y", "_atom_site_fract_z"};
  for (std::size_t c = 0; c < 3; ++c) {
    xyz[c] = atoms->column(coord_tags[c]);
    if (xyz[c] < 0) throw Error(ErrorKind::MissingTag, std::string("missing tag ") + coord_tags[c]);
  }
  int species_col = atoms->column("_atom_site_type_symbol");
  if (species_col < 0) species_col = atoms->column("_atom_site_label");
  if (species_col < 0) throw Error(ErrorKind::MissingTag, "missing tag _atom_site_type_symbol");

  std::vector<Site> sites;
  for (const auto& row : atoms->rows) {
    Vec3 f;
    for (std::size_t c = 0; c < 3; ++c) {
      const auto v = parse_number(row[static_cast<std::size_t>(xyz[c])]);
      if (!v) throw Error(ErrorKind::InvalidInput, "bad fractional coordinate '" + row[static_cast<std::size_t>(xyz[c])] + "'");
      f[static_cast<int>(c)] = *v;
    }
    const std::string& symbol = row[static_cast<std::size_t>(species_col)];
    const auto z = element_from_label(symbol);
    if (!z) throw Error(ErrorKind::UnknownElement, "unknown element '" + symbol + "'");
    sites.push_back({wrap_fraction(f), *z});
  }
  if (sites.empty()) throw Error(ErrorKind::EmptyMotif, "atom_site loop has no rows");

  const auto ops = detail::symmetry_operators(block);
  if (!ops.empty()) sites = expand_symmetry(sites, ops);

  std::vector<Vec3> frac;
  std::vector<int> species;
  for (const auto& s : sites) {
    frac.push_back(s.frac);
    species.push_back(s.species);
  }
  return {basis, Motif(std::move(frac), std::move(species)), block.name};
}

inline PeriodicSet to_periodic_set(const Document& doc) {
  for (const auto& block : doc.blocks) {
    if (block.find("_cell_length_a")) return to_periodic_set(block);
  }
  throw Error(ErrorKind::MissingTag, "missing tag _cell_length_a");
}

inline PeriodicSet read_periodic_set(const std::string& path) { return to_periodic_set(read_cif_file(path)); }

namespace detail {
inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Emits a P1 CIF (LF line endings) with 17 significant digits.
inline std::string write_cif(const PeriodicSet& set) {
  std::string name = set.id.empty() ? "pddkit" : set.id;
  for (auto& ch : name)
    if (detail::is_space(ch) || ch == '#') ch = '_';
  const CellParameters p = cell_parameters(set.basis);
  std::ostringstream out;
  out << "data_" << name << '\n';
  out << "_symmetry_space_group_name_H-M 'P 1'\n";
  out << "_cell_length_a " << detail::format_g17(p.a) << '\n';
  out << "_cell_length_b " << detail::format_g17(p.b) << '\n';
  out << "_cell_length_c " << detail::format_g17(p.c) << '\n';
  out << "_cell_angle_alpha " << detail::format_g17(p.alpha) << '\n';
  out << "_cell_angle_beta " << detail::format_g17(p.beta) << '\n';
  out << "_cell_angle_gamma " << detail::format_g17(p.gamma) << '\n';
  out << "loop_\n_symmetry_equiv_pos_as_xyz\n'x, y, z'\n";
  out << "loop_\n_atom_site_label\n_atom_site_type_symbol\n_atom_site_fract_x\n_atom_site_fract_y\n"
         "_atom_site_fract_z\n";
  for (std::size_t j = 0; j < set.size(); ++j) {
    const auto symbol = element_symbol(set.motif.species()[j]);
    const Vec3& f = set.motif.positions()[j];
    out << symbol << j + 1 << ' ' << symbol << ' ' << detail::format_g17(f.x()) << ' ' << detail::format_g17(f.y())
        << ' ' << detail::format_g17(f.z()) << '\n';
  }
  return out.str();
}

}  // namespace pddkit::cif
