#include <gtest/gtest.h>

#include <string>

#include "pddkit/cif.hpp"
#include "pddkit/rng.hpp"

namespace pddkit::cif {
namespace {

constexpr const char* kCubicSi = R"(data_si
_cell_length_a 4
_cell_length_b 4
_cell_length_c 4
_cell_angle_alpha 90
_cell_angle_beta 90
_cell_angle_gamma 90
loop_
_atom_site_label
_atom_site_type_symbol
_atom_site_fract_x
_atom_site_fract_y
_atom_site_fract_z
Si1 Si 0 0 0
)";

std::string with_symops(const std::string& symops) {
  std::string text = kCubicSi;
  return text + "loop_\n_symmetry_equiv_pos_as_xyz\n" + symops;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidInput;
}

TEST(ParseCif, MinimalCubic) {
  const auto doc = parse_cif(kCubicSi);
  ASSERT_EQ(doc.blocks.size(), 1u);
  const auto& b = doc.blocks[0];
  EXPECT_EQ(b.name, "si");
  EXPECT_EQ(b.items.size(), 6u);
  ASSERT_EQ(b.loops.size(), 1u);
  EXPECT_EQ(b.loops[0].rows.size(), 1u);
  EXPECT_EQ(b.loops[0].tags.size(), 5u);
}

TEST(ParseCif, StandardUncertaintyStripped) {
  EXPECT_DOUBLE_EQ(*parse_number("4.123(5)"), 4.123);
  EXPECT_DOUBLE_EQ(*parse_number("-0.25"), -0.25);
  EXPECT_DOUBLE_EQ(*parse_number("1e-3"), 1e-3);
  EXPECT_FALSE(parse_number("?").has_value());
  EXPECT_FALSE(parse_number(".").has_value());
  EXPECT_FALSE(parse_number("abc").has_value());
  const auto doc = parse_cif("data_x\n_cell_length_a 4.123(5)\n");
  EXPECT_DOUBLE_EQ(*parse_number(*doc.blocks[0].find("_cell_length_a")), 4.123);
}

TEST(ParseCif, LoopArityErrorNamesHeaderLine) {
  const std::string text = "data_x\n# comment\nloop_\n_a\n_b\n_c\n_d\n1 2 3\n";
  try {
    parse_cif(text);
    FAIL();
  } catch (const CifSyntaxError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SyntaxError);
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(ParseCif, SyntaxErrors) {
  EXPECT_THROW(parse_cif(""), CifSyntaxError);
  EXPECT_THROW(parse_cif("_cell_length_a 4\n"), CifSyntaxError);
  EXPECT_THROW(parse_cif("data_x\n_a 'unterminated\n"), CifSyntaxError);
  EXPECT_THROW(parse_cif("data_x\n_a\n;text never ends\n"), CifSyntaxError);
  EXPECT_THROW(parse_cif("data_x\n_a\n"), CifSyntaxError);
  EXPECT_THROW(parse_cif("data_x\nloop_\n"), CifSyntaxError);
}

TEST(ParseCif, QuotesTextFieldsAndComments) {
  const std::string text =
      "# leading comment\n"
      "data_q\n"
      "_name 'it''s here'  # trailing\n"
      "_other \"double quoted\"\n"
      "_text\n;\nline one\nline two\n;\n"
      "loop_ _t1 _t2 a 'b c' d \"e f\"\n";
  const auto doc = parse_cif(text);
  const auto& b = doc.blocks[0];
  EXPECT_EQ(*b.find("_name"), "it''s here");
  EXPECT_EQ(*b.find("_other"), "double quoted");
  EXPECT_EQ(*b.find("_text"), "\nline one\nline two");  // newline before the closing ; is delimiter
  ASSERT_EQ(b.loops.size(), 1u);
  ASSERT_EQ(b.loops[0].rows.size(), 2u);
  EXPECT_EQ(b.loops[0].rows[0][1], "b c");
  EXPECT_EQ(b.loops[0].rows[1][1], "e f");
}

TEST(ParseCif, TagsCaseInsensitiveAndMultipleBlocks) {
  const auto doc = parse_cif("data_a\n_CELL_Length_A 3\ndata_b\n_x 1\n");
  ASSERT_EQ(doc.blocks.size(), 2u);
  EXPECT_NE(doc.blocks[0].find("_cell_length_a"), nullptr);
  EXPECT_EQ(doc.blocks[1].name, "b");
}

TEST(ToPeriodicSet, CubicSilicon) {
  const auto s = to_periodic_set(parse_cif(kCubicSi));
  EXPECT_TRUE(s.basis.matrix().isApprox(4.0 * Mat3::Identity(), 0.0));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.motif.species()[0], 14);
  EXPECT_EQ(s.id, "si");
}

TEST(ToPeriodicSet, BodyCentringOperator) {
  const auto s = to_periodic_set(parse_cif(with_symops("x,y,z\n'x+1/2, y+1/2, z+1/2'\n")));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.motif.positions()[1], Vec3(0.5, 0.5, 0.5));
}

TEST(ToPeriodicSet, DuplicateImagesMerged) {
  // -x maps the origin onto itself.
  const auto s = to_periodic_set(parse_cif(with_symops("x,y,z\n-x,-y,-z\n")));
  EXPECT_EQ(s.size(), 1u);
}

TEST(ToPeriodicSet, ModernSymopTagAndSingleItem) {
  std::string text = kCubicSi;
  text += "_space_group_symop_operation_xyz 'x+1/2,y+1/2,z'\n";
  EXPECT_EQ(to_periodic_set(parse_cif(text)).motif.positions()[0], Vec3(0.5, 0.5, 0.0));
}

TEST(ToPeriodicSet, Errors) {
  std::string no_a = kCubicSi;
  no_a.replace(no_a.find("_cell_length_a 4"), 16, "");
  EXPECT_EQ(kind_of([&] { to_periodic_set(parse_cif(no_a)); }), ErrorKind::MissingTag);
  try {
    to_periodic_set(parse_cif(no_a));
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("_cell_length_a"), std::string::npos);
  }
  std::string bad = kCubicSi;
  bad.replace(bad.find("Si1 Si"), 6, "Qq1 Qq");
  EXPECT_EQ(kind_of([&] { to_periodic_set(parse_cif(bad)); }), ErrorKind::UnknownElement);
  std::string empty = kCubicSi;
  empty.replace(empty.find("Si1 Si 0 0 0\n"), 13, "");
  // A loop with tags but no values is legal CIF; it yields no sites.
  EXPECT_EQ(kind_of([&] { to_periodic_set(parse_cif(empty)); }), ErrorKind::EmptyMotif);
}

TEST(Elements, SymbolsAndLabels) {
  EXPECT_EQ(element_from_label("Fe2+"), 26);
  EXPECT_EQ(element_from_label("O2-"), 8);
  EXPECT_EQ(element_from_label("Si"), 14);
  EXPECT_EQ(element_from_label("SI1"), 14);
  EXPECT_EQ(element_from_label("D"), 1);
  EXPECT_EQ(element_from_label("T"), 1);
  EXPECT_FALSE(element_from_label("Xx").has_value());
  EXPECT_EQ(element_symbol(118), "Og");
}

TEST(Symop, RationalAffineParsing) {
  const auto op = parse_symmetry_operator("-y+1/2, x-y, 2/3+z");
  const Vec3 f(0.1, 0.2, 0.3);
  const Vec3 g = op.apply(f);
  EXPECT_DOUBLE_EQ(g.x(), 0.5 - 0.2);
  EXPECT_DOUBLE_EQ(g.y(), 0.1 - 0.2);
  EXPECT_NEAR(g.z(), 2.0 / 3.0 + 0.3, 1e-15);
  EXPECT_NO_THROW(parse_symmetry_operator("X, Y, Z"));
  EXPECT_NO_THROW(parse_symmetry_operator("x,y,z+0.5"));
  EXPECT_THROW(parse_symmetry_operator("x,y"), Error);
  EXPECT_THROW(parse_symmetry_operator("x,y,w"), Error);
  EXPECT_THROW(parse_symmetry_operator("x,y,z/0"), Error);
}

TEST(Symop, ExpansionIdempotent) {
  std::vector<SymmetryOperator> ops;
  // Point group 4/m, which is closed under composition.
  for (const char* s : {"x,y,z", "-y,x,z", "-x,-y,z", "y,-x,z", "-x,-y,-z", "y,-x,-z", "x,y,-z", "-y,x,-z"}) {
    ops.push_back(parse_symmetry_operator(s));
  }
  const std::vector<Site> sites{{Vec3(0.1, 0.2, 0.3), 8}, {Vec3(0, 0, 0), 14}};
  const auto once = expand_symmetry(sites, ops);
  const auto twice = expand_symmetry(once, ops);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    EXPECT_TRUE(once[i].frac.isApprox(twice[i].frac, 0.0) || (once[i].frac - twice[i].frac).norm() < 1e-12);
    EXPECT_EQ(once[i].species, twice[i].species);
  }
}

TEST(WriteCif, CubicText) {
  const PeriodicSet s{LatticeBasis::cubic(4.0), Motif({Vec3::Zero()}, {14}), "si"};
  const auto text = write_cif(s);
  EXPECT_NE(text.find("_cell_length_a 4\n"), std::string::npos);
  EXPECT_NE(text.find("Si1 Si 0 0 0\n"), std::string::npos);
  EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST(WriteCif, RoundTripRandomSets) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = random_periodic_set(seed, 1 + static_cast<int>(seed % 8), 0.5);
    const auto t = to_periodic_set(parse_cif(write_cif(s)));
    // The writer stores cell parameters, so compare against the re-oriented basis.
    const auto expected = cell_params_to_basis(cell_parameters(s.basis));
    EXPECT_LE((t.basis.matrix() - expected.matrix()).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_EQ(t.size(), s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      EXPECT_LE((t.motif.positions()[j] - s.motif.positions()[j]).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_EQ(t.motif.species()[j], s.motif.species()[j]);
    }
  }
}

TEST(ParseCif, FuzzNeverCrashes) {
  Rng rng(99);
  const std::string alphabet = "data_loop_ _;'\"#\n\t 0123456789.()?xyz";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text(rng.index(200), '\0');
    for (auto& c : text) {
      c = rng.uniform() < 0.5 ? static_cast<char>(rng.index(256)) : alphabet[rng.index(alphabet.size())];
    }
    if (rng.uniform() < 0.5) text = "data_f\n" + text;
    try {
      const auto doc = parse_cif(text);
      try {
        to_periodic_set(doc);
      } catch (const Error&) {
      }
    } catch (const CifSyntaxError&) {
    }
  }
  SUCCEED();
}

}  // namespace
}  // namespace pddkit::cif
