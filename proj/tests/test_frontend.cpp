#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oatforge/parse.hpp"
#include "test_support.hpp"

using namespace oatforge;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string fixture(const std::string& name) {
  return std::string(OATFORGE_FIXTURE_DIR) + "/" + name;
}

// Error-message matcher that keeps the diagnostics' wording pinned.
void check_throws_with(const std::string& source, const std::string& needle) {
  try {
    parse_kernel(source);
    FAIL_CHECK("expected a diagnostic containing '" << needle << "'");
  } catch (const ParseError& e) {
    CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos,
                  "got: " << e.what());
  }
}

const char* kMinimal = R"(kernel tiny
param n = 5
do i = 1, n
begin body
  ! work
end body
enddo
)";

}  // namespace

TEST_CASE("quadruple-loop fixture parses with both directives") {
  Kernel k = parse_kernel(read_file(fixture("exb.oat")));
  CHECK(k.name == "exb");
  CHECK(k.depth() == 4);
  REQUIRE(k.params.size() == 5);
  CHECK(k.param("nv") == 8);
  CHECK(k.param("iend_xw") == 127);
  CHECK(k.omp_depth == 2);

  REQUIRE(k.nest.size() == 4);
  CHECK(k.nest[0].index == "iv");
  CHECK(k.nest[0].lower == BoundExpr::literal(1));
  CHECK(k.nest[0].upper == BoundExpr::ident("nv", 2, 0));
  CHECK(k.nest[1].lower == BoundExpr::ident("nz", -1, 0));
  CHECK(k.nest[1].upper == BoundExpr::ident("nz", 1, -1));
  CHECK(k.nest[3].lower == BoundExpr::literal(0));

  CHECK(k.loop_length(1) == 16);
  CHECK(k.loop_length(2) == 16);
  CHECK(k.loop_length(3) == 128);
  CHECK(k.loop_length(4) == 65);

  REQUIRE(k.directives.size() == 2);
  const DirectiveSpec* ex = k.find_directive(DirectiveKind::Exchange);
  const DirectiveSpec* lf = k.find_directive(DirectiveKind::LoopFusion);
  REQUIRE(ex != nullptr);
  REQUIRE(lf != nullptr);
  CHECK(ex->depths.empty());  // unrestricted: all depths
  CHECK(ex->depth_begin == 1);
  CHECK(ex->depth_end == 4);
  CHECK(lf->depth_begin == 1);
  CHECK(lf->depth_end == 4);
  // The LoopFusion region wraps the Exchange region.
  CHECK(lf->region_begin < ex->region_begin);
  CHECK(ex->region_end < lf->region_end);

  CHECK(k.body.size() == 1);
  CHECK(k.body_writes == std::vector<std::string>{"wkdf1_xw"});
  CHECK(k.body_reads.size() == 7);
}

TEST_CASE("single loop without directives") {
  Kernel k = parse_kernel(kMinimal);
  CHECK(k.depth() == 1);
  CHECK(k.directives.empty());
  CHECK(k.omp_depth == 1);
  CHECK(k.loop_length(1) == 5);
}

TEST_CASE("depth numbering matches nesting level") {
  Kernel k = parse_kernel(read_file(fixture("exb.oat")));
  for (int q = 0; q < k.depth(); ++q) CHECK(k.nest[q].depth == q + 1);
}

TEST_CASE("bound expression grammar") {
  auto bound_of = [](const std::string& text) {
    std::string src = "kernel b\nparam n = 9\ndo i = " + text +
                      ", n\nbegin body\n!x\nend body\nenddo\n";
    return parse_kernel(src).nest[0].lower;
  };
  CHECK(bound_of("7") == BoundExpr::literal(7));
  CHECK(bound_of("-3") == BoundExpr::literal(-3));
  CHECK(bound_of("n") == BoundExpr::ident("n"));
  CHECK(bound_of("-n") == BoundExpr::ident("n", -1, 0));
  CHECK(bound_of("(-n)") == BoundExpr::ident("n", -1, 0));
  CHECK(bound_of("n-1") == BoundExpr::ident("n", 1, -1));
  CHECK(bound_of("n + 2") == BoundExpr::ident("n", 1, 2));
  CHECK(bound_of("2*n") == BoundExpr::ident("n", 2, 0));
  CHECK(bound_of("( 2*n )") == BoundExpr::ident("n", 2, 0));

  for (const char* bad : {"n*2", "n+m", "2*n-1", "n*n", "1+2", "n-"}) {
    std::string src = std::string("kernel b\nparam n = 9\nparam m = 2\ndo i = ") + bad +
                      ", n\nbegin body\n!x\nend body\nenddo\n";
    CHECK_THROWS_AS(parse_kernel(src), ParseError);
  }
}

TEST_CASE("rejection diagnostics are distinct and complete") {
  SUBCASE("non-rectangular nest") {
    check_throws_with("kernel k\nparam n = 4\ndo i = 1, n\ndo j = 1, i\n"
                      "begin body\n!x\nend body\nenddo\nenddo\n",
                      "non-rectangular nest");
  }
  SUBCASE("unbound parameter") {
    check_throws_with("kernel k\ndo i = 1, n\nbegin body\n!x\nend body\nenddo\n",
                      "unbound parameter 'n'");
  }
  SUBCASE("duplicate index name") {
    check_throws_with("kernel k\nparam n = 4\ndo i = 1, n\ndo i = 1, n\n"
                      "begin body\n!x\nend body\nenddo\nenddo\n",
                      "duplicate index name 'i'");
  }
  SUBCASE("partial region overlap") {
    check_throws_with(
        "kernel k\nparam n = 4\n"
        "!oat$ install Exchange region start\n"
        "!oat$ install LoopFusion region start\n"
        "do i = 1, n\nbegin body\n!x\nend body\nenddo\n"
        "!oat$ install Exchange region end\n"
        "!oat$ install LoopFusion region end\n",
        "overlapping regions");
  }
  SUBCASE("syntax error carries line number") {
    try {
      parse_kernel("kernel k\nparam n = 4\nwat\n");
      FAIL_CHECK("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.pos().line == 3);
      CHECK(std::string(e.what()).find("syntax error") != std::string::npos);
    }
  }
  SUBCASE("loop after body breaks perfect nesting") {
    check_throws_with("kernel k\nparam n = 4\ndo i = 1, n\nbegin body\n!x\nend body\n"
                      "do j = 1, n\nbegin body\n!x\nend body\nenddo\nenddo\n",
                      "non-rectangular nest");
  }
  SUBCASE("two bodies") {
    check_throws_with("kernel k\nparam n = 4\ndo i = 1, n\nbegin body\n!x\nend body\n"
                      "begin body\n!y\nend body\nenddo\n",
                      "duplicate body");
  }
  SUBCASE("missing enddo") {
    check_throws_with("kernel k\nparam n = 4\ndo i = 1, n\nbegin body\n!x\nend body\n",
                      "unclosed loop");
  }
  SUBCASE("second OpenMP directive") {
    check_throws_with("kernel k\nparam n = 4\n!$omp parallel do\ndo i = 1, n\n"
                      "!$omp parallel do\ndo j = 1, n\n"
                      "begin body\n!x\nend body\nenddo\nenddo\n",
                      "one OpenMP directive");
  }
  SUBCASE("region end without start") {
    check_throws_with("kernel k\nparam n = 4\ndo i = 1, n\nbegin body\n!x\nend body\n"
                      "enddo\n!oat$ install Exchange region end\n",
                      "without matching start");
  }
  SUBCASE("region not covering the nest") {
    check_throws_with("kernel k\nparam n = 4\ndo i = 1, n\n"
                      "!oat$ install Exchange region start\n"
                      "do j = 1, n\nbegin body\n!x\nend body\nenddo\n"
                      "!oat$ install Exchange region end\nenddo\n",
                      "whole loop nest");
  }
  SUBCASE("exchange depth out of range") {
    check_throws_with("kernel k\nparam n = 4\n"
                      "!oat$ install Exchange (3) region start\n"
                      "do i = 1, n\nbegin body\n!x\nend body\nenddo\n"
                      "!oat$ install Exchange (3) region end\n",
                      "out of range");
  }
  SUBCASE("duplicate exchange depth") {
    check_throws_with("kernel k\nparam n = 4\n"
                      "!oat$ install Exchange (1, 1) region start\n"
                      "do i = 1, n\nbegin body\n!x\nend body\nenddo\n"
                      "!oat$ install Exchange (1, 1) region end\n",
                      "duplicate Exchange depth");
  }
  SUBCASE("index shadowing a parameter") {
    check_throws_with("kernel k\nparam i = 4\ndo i = 1, 3\nbegin body\n!x\nend body\nenddo\n",
                      "shadows a parameter");
  }
}

TEST_CASE("validate_region_nesting spans") {
  auto spec = [](DirectiveKind kind, int b, int e) {
    DirectiveSpec d;
    d.kind = kind;
    d.region_begin = b;
    d.region_end = e;
    return d;
  };
  CHECK(validate_region_nesting({}) == "");
  CHECK(validate_region_nesting({spec(DirectiveKind::LoopFusion, 1, 10),
                                 spec(DirectiveKind::Exchange, 2, 9)}) == "");
  CHECK(validate_region_nesting({spec(DirectiveKind::Exchange, 1, 10),
                                 spec(DirectiveKind::LoopFusion, 1, 10)}) == "");
  std::string diag = validate_region_nesting(
      {spec(DirectiveKind::Exchange, 1, 5), spec(DirectiveKind::LoopFusion, 3, 8)});
  CHECK(diag.find("partially overlaps") != std::string::npos);
  CHECK(diag.find("Exchange [1,5]") != std::string::npos);
  CHECK(diag.find("LoopFusion [3,8]") != std::string::npos);
}

TEST_CASE("pretty-print round trip on the fixture") {
  Kernel k = parse_kernel(read_file(fixture("exb.oat")));
  Kernel again = parse_kernel(pretty_print(k));
  CHECK(structurally_equal(k, again));
  // And the canonical form is a fixed point.
  CHECK(pretty_print(k) == pretty_print(again));
}

TEST_CASE("pretty-print round trip over random kernels") {
  std::mt19937_64 rng(20260810);
  for (int iter = 0; iter < 200; ++iter) {
    Kernel k = oatforge_test::random_kernel(rng);
    std::string text = pretty_print(k);
    CAPTURE(text);
    Kernel again = parse_kernel(text);
    CHECK(structurally_equal(k, again));
  }
}

TEST_CASE("single-depth exchange around the whole nest") {
  std::string src =
      "kernel quad\nparam n = 3\n"
      "!oat$ install LoopFusion region start\n"
      "!oat$ install Exchange (1) region start\n"
      "do iv = 1, n\n!$omp parallel do\ndo iz = 1, n\ndo mx = 1, n\ndo my = 1, n\n"
      "begin body\n! k\nend body\nenddo\nenddo\nenddo\nenddo\n"
      "!oat$ install Exchange (1) region end\n"
      "!oat$ install LoopFusion region end\n";
  Kernel k = parse_kernel(src);
  CHECK(k.depth() == 4);
  REQUIRE(k.directives.size() == 2);
  const DirectiveSpec* ex = k.find_directive(DirectiveKind::Exchange);
  REQUIRE(ex != nullptr);
  CHECK(ex->depths == std::vector<int>{1});
  CHECK(k.omp_depth == 2);
}

TEST_CASE("explicit exchange depth list round trips") {
  std::string src =
      "kernel k\nparam n = 4\n"
      "!oat$ install Exchange (2, 1) region start\n"
      "do i = 1, n\ndo j = 1, n\nbegin body\n!x\nend body\nenddo\nenddo\n"
      "!oat$ install Exchange (2, 1) region end\n";
  Kernel k = parse_kernel(src);
  REQUIRE(k.directives.size() == 1);
  CHECK(k.directives[0].depths == std::vector<int>{2, 1});
  Kernel again = parse_kernel(pretty_print(k));
  CHECK(structurally_equal(k, again));
}

TEST_CASE("parse_kernel_file reports the path on failure") {
  CHECK_THROWS_WITH_AS(parse_kernel_file("does/not/exist.oat"),
                       doctest::Contains("does/not/exist.oat"), std::runtime_error);
}
