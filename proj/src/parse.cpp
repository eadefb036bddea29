#include "oatforge/parse.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace oatforge {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool is_identifier(const std::string& s) {
  if (s.empty() || !is_ident_start(s[0])) return false;
  return std::all_of(s.begin(), s.end(), is_ident_char);
}

// Splits on whitespace.
std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

struct BoundToken {
  enum Kind { Int, Ident, Plus, Minus, Star, LParen, RParen } kind;
  std::string text;
  long long value = 0;
};

std::vector<BoundToken> lex_bound(const std::string& text, SourcePos pos) {
  std::vector<BoundToken> toks;
  size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      toks.push_back({BoundToken::Int, text.substr(i, j - i),
                      std::stoll(text.substr(i, j - i))});
      i = j;
    } else if (is_ident_start(c)) {
      size_t j = i;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      toks.push_back({BoundToken::Ident, text.substr(i, j - i), 0});
      i = j;
    } else if (c == '+') {
      toks.push_back({BoundToken::Plus, "+", 0});
      ++i;
    } else if (c == '-') {
      toks.push_back({BoundToken::Minus, "-", 0});
      ++i;
    } else if (c == '*') {
      toks.push_back({BoundToken::Star, "*", 0});
      ++i;
    } else if (c == '(') {
      toks.push_back({BoundToken::LParen, "(", 0});
      ++i;
    } else if (c == ')') {
      toks.push_back({BoundToken::RParen, ")", 0});
      ++i;
    } else {
      throw ParseError(pos, std::string("syntax error: unexpected character '") +
                                c + "' in bound expression");
    }
  }
  return toks;
}

// Restricted affine bound grammar:
//   [-] int | [-] ident | [-] ident (+|-) int | [-] int * ident
// with optional enclosing parentheses.
BoundExpr parse_bound(const std::string& text, SourcePos pos) {
  auto toks = lex_bound(text, pos);
  // Strip one or more levels of full parenthesization.
  while (toks.size() >= 2 && toks.front().kind == BoundToken::LParen &&
         toks.back().kind == BoundToken::RParen) {
    int depth = 0;
    bool wraps = true;
    for (size_t i = 0; i + 1 < toks.size(); ++i) {
      if (toks[i].kind == BoundToken::LParen) ++depth;
      if (toks[i].kind == BoundToken::RParen) --depth;
      if (depth == 0) { wraps = false; break; }
    }
    if (!wraps) break;
    toks.erase(toks.begin());
    toks.pop_back();
  }
  auto fail = [&]() -> BoundExpr {
    throw ParseError(pos, "syntax error: malformed bound expression '" + trim(text) +
                              "' (expected int, ident, ident+/-int, or int*ident)");
  };
  size_t i = 0;
  long long sign = 1;
  if (i < toks.size() && toks[i].kind == BoundToken::Minus) {
    sign = -1;
    ++i;
  }
  if (i >= toks.size()) return fail();

  if (toks[i].kind == BoundToken::Int) {
    long long v = toks[i].value;
    ++i;
    if (i == toks.size()) return BoundExpr::literal(sign * v);
    // int * ident
    if (toks[i].kind == BoundToken::Star && i + 1 < toks.size() &&
        toks[i + 1].kind == BoundToken::Ident && i + 2 == toks.size()) {
      return BoundExpr::ident(toks[i + 1].text, sign * v, 0);
    }
    return fail();
  }
  if (toks[i].kind == BoundToken::Ident) {
    std::string name = toks[i].text;
    ++i;
    if (i == toks.size()) return BoundExpr::ident(name, sign, 0);
    // ident +/- int
    if ((toks[i].kind == BoundToken::Plus || toks[i].kind == BoundToken::Minus) &&
        i + 1 < toks.size() && toks[i + 1].kind == BoundToken::Int &&
        i + 2 == toks.size()) {
      long long off = toks[i + 1].value;
      if (toks[i].kind == BoundToken::Minus) off = -off;
      return BoundExpr::ident(name, sign, off);
    }
    return fail();
  }
  return fail();
}

struct OpenRegion {
  DirectiveSpec spec;
};

// "!oat$ install Exchange (1, 2) region start" -> (kind, depths, is_start)
struct OatDirectiveLine {
  DirectiveKind kind;
  std::vector<int> depths;
  bool is_start = false;
};

OatDirectiveLine parse_oat_line(const std::string& line, SourcePos pos) {
  std::string t = trim(line);
  std::string low = lower(t);
  // Strip the "!oat$" sentinel.
  size_t at = low.find("!oat$");
  t = trim(t.substr(at + 5));
  low = lower(t);
  if (low.rfind("install", 0) != 0)
    throw ParseError(pos, "syntax error: expected 'install' after '!oat$'");
  t = trim(t.substr(7));
  low = lower(t);

  OatDirectiveLine out;
  if (low.rfind("exchange", 0) == 0) {
    out.kind = DirectiveKind::Exchange;
    t = trim(t.substr(8));
  } else if (low.rfind("loopfusion", 0) == 0) {
    out.kind = DirectiveKind::LoopFusion;
    t = trim(t.substr(10));
  } else {
    throw ParseError(pos, "syntax error: unknown construct in '!oat$ install' "
                          "(expected Exchange or LoopFusion)");
  }

  if (!t.empty() && t[0] == '(') {
    size_t close = t.find(')');
    if (close == std::string::npos)
      throw ParseError(pos, "syntax error: unterminated depth list");
    std::string inner = t.substr(1, close - 1);
    t = trim(t.substr(close + 1));
    std::string item;
    std::istringstream is(inner);
    while (std::getline(is, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        size_t used = 0;
        int d = std::stoi(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
        out.depths.push_back(d);
      } catch (const std::exception&) {
        throw ParseError(pos, "syntax error: bad depth '" + item + "' in depth list");
      }
    }
    if (out.kind == DirectiveKind::LoopFusion && !out.depths.empty())
      throw ParseError(pos, "syntax error: LoopFusion takes no depth list");
  }

  std::string tail = lower(trim(t));
  if (tail == "region start")
    out.is_start = true;
  else if (tail == "region end")
    out.is_start = false;
  else
    throw ParseError(pos, "syntax error: expected 'region start' or 'region end'");
  return out;
}

}  // namespace

std::string BoundExpr::str() const {
  if (is_literal()) return std::to_string(offset);
  std::string s;
  if (coeff == 1)
    s = symbol;
  else if (coeff == -1)
    s = "-" + symbol;
  else
    s = std::to_string(coeff) + "*" + symbol;
  if (offset > 0) s += "+" + std::to_string(offset);
  if (offset < 0) s += std::to_string(offset);
  return s;
}

std::string BoundExpr::str_parenthesized() const {
  std::string s = str();
  if (!s.empty() && s[0] == '-') return "(" + s + ")";
  return s;
}

std::string to_string(DirectiveKind kind) {
  return kind == DirectiveKind::Exchange ? "Exchange" : "LoopFusion";
}

long long Kernel::loop_length(int d) const {
  const auto& h = nest.at(static_cast<size_t>(d) - 1);
  auto pm = param_map();
  try {
    return h.upper.eval(pm) - h.lower.eval(pm) + 1;
  } catch (const std::out_of_range&) {
    throw ParseError({0, 0}, "unbound parameter in bounds of loop '" + h.index + "'");
  }
}

bool structurally_equal(const Kernel& a, const Kernel& b) {
  auto dir_key = [](const DirectiveSpec& d) {
    return std::tuple(d.kind, d.depths, d.depth_begin, d.depth_end);
  };
  std::vector<std::tuple<DirectiveKind, std::vector<int>, int, int>> da, db;
  for (const auto& d : a.directives) da.push_back(dir_key(d));
  for (const auto& d : b.directives) db.push_back(dir_key(d));
  std::sort(da.begin(), da.end());
  std::sort(db.begin(), db.end());
  return a.name == b.name && a.params == b.params && a.nest == b.nest &&
         a.body == b.body && a.body_reads == b.body_reads &&
         a.body_writes == b.body_writes && a.omp_depth == b.omp_depth && da == db;
}

std::string validate_region_nesting(const std::vector<DirectiveSpec>& directives) {
  for (size_t i = 0; i < directives.size(); ++i) {
    for (size_t j = i + 1; j < directives.size(); ++j) {
      const auto& a = directives[i];
      const auto& b = directives[j];
      bool disjoint = a.region_end < b.region_begin || b.region_end < a.region_begin;
      bool a_in_b = b.region_begin <= a.region_begin && a.region_end <= b.region_end;
      bool b_in_a = a.region_begin <= b.region_begin && b.region_end <= a.region_end;
      if (!disjoint && !a_in_b && !b_in_a) {
        std::ostringstream os;
        os << "overlapping regions: " << to_string(a.kind) << " [" << a.region_begin
           << "," << a.region_end << "] partially overlaps " << to_string(b.kind)
           << " [" << b.region_begin << "," << b.region_end << "]";
        return os.str();
      }
    }
  }
  return "";
}

Kernel parse_kernel(const std::string& source) {
  std::vector<std::string> lines;
  {
    std::istringstream is(source);
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }

  Kernel k;
  std::vector<OpenRegion> open_regions;
  std::vector<int> do_lines;  // source line of each loop header, by depth
  bool seen_kernel = false;
  bool seen_arrays = false;
  bool pending_omp = false;
  bool seen_omp = false;
  bool seen_omp_end = false;
  bool in_body = false;
  bool body_done = false;
  int open_loops = 0;

  for (size_t li = 0; li < lines.size(); ++li) {
    SourcePos pos{static_cast<int>(li + 1), 1};
    const std::string& raw = lines[li];

    if (in_body) {
      if (lower(trim(raw)) == "end body") {
        in_body = false;
        body_done = true;
      } else {
        k.body.push_back(raw);
      }
      continue;
    }

    std::string t = trim(raw);
    if (t.empty()) continue;
    std::string low = lower(t);

    if (low.rfind("!oat$", 0) == 0) {
      auto d = parse_oat_line(t, pos);
      if (pending_omp)
        throw ParseError(pos, "syntax error: '!$omp parallel do' must be "
                              "immediately followed by a loop");
      if (d.is_start) {
        DirectiveSpec spec;
        spec.kind = d.kind;
        spec.depths = d.depths;
        spec.region_begin = pos.line;
        open_regions.push_back({spec});
      } else {
        // Close the innermost open region of the same kind.
        auto it = std::find_if(open_regions.rbegin(), open_regions.rend(),
                               [&](const OpenRegion& r) { return r.spec.kind == d.kind; });
        if (it == open_regions.rend())
          throw ParseError(pos, "syntax error: '" + to_string(d.kind) +
                                    " region end' without matching start");
        if (!d.depths.empty() && d.depths != it->spec.depths)
          throw ParseError(pos, "syntax error: depth list on region end does not "
                                "match region start");
        DirectiveSpec spec = it->spec;
        spec.region_end = pos.line;
        open_regions.erase(std::next(it).base());
        k.directives.push_back(spec);
      }
      continue;
    }

    if (low.rfind("!$omp", 0) == 0) {
      std::string rest = lower(trim(t.substr(5)));
      if (rest.rfind("end parallel do", 0) == 0) {
        if (!seen_omp || seen_omp_end)
          throw ParseError(pos, "syntax error: stray '!$omp end parallel do'");
        seen_omp_end = true;
        continue;
      }
      if (rest.rfind("parallel do", 0) == 0) {
        if (seen_omp)
          throw ParseError(pos, "only one OpenMP directive is accepted inside "
                                "the optimized loop");
        if (body_done)
          throw ParseError(pos, "syntax error: '!$omp parallel do' after the body");
        seen_omp = true;
        pending_omp = true;  // clause text (private, ...) is ignored; recomputed
        continue;
      }
      throw ParseError(pos, "syntax error: unsupported OpenMP directive");
    }

    if (low[0] == '!') continue;  // plain comment

    if (!seen_kernel) {
      auto words = split_ws(t);
      if (words.size() != 2 || lower(words[0]) != "kernel" || !is_identifier(words[1]))
        throw ParseError(pos, "syntax error: expected 'kernel <name>'");
      k.name = words[1];
      seen_kernel = true;
      continue;
    }

    if (low.rfind("param", 0) == 0 && (low.size() == 5 || !is_ident_char(low[5]))) {
      if (open_loops > 0 || body_done)
        throw ParseError(pos, "syntax error: 'param' only allowed in the preamble");
      std::string rest = trim(t.substr(5));
      size_t eq = rest.find('=');
      if (eq == std::string::npos)
        throw ParseError(pos, "syntax error: expected 'param <ident> = <int>'");
      std::string name = trim(rest.substr(0, eq));
      std::string val = trim(rest.substr(eq + 1));
      if (!is_identifier(name))
        throw ParseError(pos, "syntax error: bad parameter name '" + name + "'");
      long long v = 0;
      try {
        size_t used = 0;
        v = std::stoll(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
      } catch (const std::exception&) {
        throw ParseError(pos, "syntax error: bad parameter value '" + val + "'");
      }
      if (k.param(name))
        throw ParseError(pos, "duplicate parameter '" + name + "'");
      k.params.emplace_back(name, v);
      continue;
    }

    if (low.rfind("body_arrays", 0) == 0 &&
        (low.size() == 11 || !is_ident_char(low[11]))) {
      if (seen_arrays)
        throw ParseError(pos, "syntax error: repeated 'body_arrays' line");
      if (open_loops > 0 || body_done)
        throw ParseError(pos, "syntax error: 'body_arrays' only allowed in the preamble");
      seen_arrays = true;
      for (const auto& word : split_ws(trim(t.substr(11)))) {
        std::string name = word;
        std::string mode = "rw";
        size_t colon = word.find(':');
        if (colon != std::string::npos) {
          name = word.substr(0, colon);
          mode = lower(word.substr(colon + 1));
        }
        if (!is_identifier(name) || (mode != "r" && mode != "w" && mode != "rw"))
          throw ParseError(pos, "syntax error: bad array declaration '" + word + "'");
        if (mode == "r" || mode == "rw") k.body_reads.push_back(name);
        if (mode == "w" || mode == "rw") k.body_writes.push_back(name);
      }
      continue;
    }

    if (low.rfind("do", 0) == 0 && (low.size() == 2 || !is_ident_char(low[2]))) {
      if (body_done)
        throw ParseError(pos, "non-rectangular nest: a loop follows the body "
                              "(nest must be perfectly nested)");
      std::string rest = trim(t.substr(2));
      size_t eq = rest.find('=');
      if (eq == std::string::npos)
        throw ParseError(pos, "syntax error: expected 'do <ident> = <bound>, <bound>'");
      std::string idx = trim(rest.substr(0, eq));
      if (!is_identifier(idx))
        throw ParseError(pos, "syntax error: bad loop index '" + idx + "'");
      std::string bounds = rest.substr(eq + 1);
      // Bounds contain no commas, so the first comma separates them.
      size_t comma = bounds.find(',');
      if (comma == std::string::npos)
        throw ParseError(pos, "syntax error: expected two loop bounds");
      LoopHeader h;
      h.index = idx;
      h.lower = parse_bound(bounds.substr(0, comma), pos);
      h.upper = parse_bound(bounds.substr(comma + 1), pos);
      h.depth = ++open_loops;
      k.nest.push_back(h);
      do_lines.push_back(pos.line);
      if (pending_omp) {
        k.omp_depth = h.depth;
        pending_omp = false;
      }
      continue;
    }

    if (low == "enddo" || low == "end do") {
      if (open_loops == 0)
        throw ParseError(pos, "syntax error: 'enddo' without open loop");
      if (!body_done)
        throw ParseError(pos, "syntax error: loop closed before the body "
                              "(expected 'begin body')");
      --open_loops;
      continue;
    }

    if (low == "begin body") {
      if (body_done)
        throw ParseError(pos, "non-rectangular nest: duplicate body "
                              "(exactly one body per nest)");
      if (open_loops == 0)
        throw ParseError(pos, "syntax error: body outside any loop");
      if (pending_omp)
        throw ParseError(pos, "syntax error: '!$omp parallel do' must be "
                              "immediately followed by a loop");
      in_body = true;
      continue;
    }

    throw ParseError(pos, "syntax error: unrecognized line '" + t + "'");
  }

  SourcePos eof{static_cast<int>(lines.size()), 1};
  if (!seen_kernel) throw ParseError(eof, "syntax error: missing 'kernel <name>' line");
  if (in_body) throw ParseError(eof, "syntax error: unterminated body (missing 'end body')");
  if (!body_done) throw ParseError(eof, "syntax error: kernel has no body");
  if (open_loops > 0) throw ParseError(eof, "syntax error: unclosed loop (missing 'enddo')");
  if (pending_omp) throw ParseError(eof, "syntax error: dangling '!$omp parallel do'");
  if (!open_regions.empty())
    throw ParseError(eof, "syntax error: unclosed '" +
                              to_string(open_regions.back().spec.kind) + "' region");
  if (k.nest.empty()) throw ParseError(eof, "syntax error: kernel contains no loop");

  const int n = k.depth();

  // Index names pairwise distinct, not shadowing parameters.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j)
      if (k.nest[i].index == k.nest[j].index)
        throw ParseError(eof, "duplicate index name '" + k.nest[i].index + "'");
    if (k.param(k.nest[i].index))
      throw ParseError(eof, "loop index '" + k.nest[i].index + "' shadows a parameter");
  }

  // Bounds reference preamble parameters only; any loop index in a bound
  // makes the nest non-rectangular.
  for (const auto& h : k.nest) {
    for (const BoundExpr* b : {&h.lower, &h.upper}) {
      if (b->is_literal()) continue;
      bool is_index = std::any_of(k.nest.begin(), k.nest.end(),
                                  [&](const LoopHeader& o) { return o.index == b->symbol; });
      if (is_index)
        throw ParseError(eof, "non-rectangular nest: bound of loop '" + h.index +
                                  "' references loop index '" + b->symbol + "'");
      if (!k.param(b->symbol))
        throw ParseError(eof, "unbound parameter '" + b->symbol + "' in bounds of loop '" +
                                  h.index + "'");
    }
  }

  // Region forest, full-nest coverage, and per-directive invariants.
  std::string overlap = validate_region_nesting(k.directives);
  if (!overlap.empty()) throw ParseError(eof, overlap);
  int exchange_count = 0, fusion_count = 0;
  for (auto& d : k.directives) {
    int lo = 0, hi = 0;
    for (int i = 0; i < n; ++i) {
      if (d.region_begin <= do_lines[i] && do_lines[i] <= d.region_end) {
        if (lo == 0) lo = i + 1;
        hi = i + 1;
      }
    }
    d.depth_begin = lo;
    d.depth_end = hi;
    if (lo != 1 || hi != n)
      throw ParseError({d.region_begin, 1},
                       to_string(d.kind) + " region must enclose the whole loop nest");
    if (d.kind == DirectiveKind::Exchange) {
      ++exchange_count;
      std::vector<int> seen;
      for (int depth : d.depths) {
        if (depth < 1 || depth > n)
          throw ParseError({d.region_begin, 1},
                           "Exchange depth " + std::to_string(depth) +
                               " out of range [1, " + std::to_string(n) + "]");
        if (std::find(seen.begin(), seen.end(), depth) != seen.end())
          throw ParseError({d.region_begin, 1},
                           "duplicate Exchange depth " + std::to_string(depth));
        seen.push_back(depth);
      }
    } else {
      ++fusion_count;
    }
  }
  if (exchange_count > 1)
    throw ParseError(eof, "duplicate Exchange directive (at most one per kernel)");
  if (fusion_count > 1)
    throw ParseError(eof, "duplicate LoopFusion directive (at most one per kernel)");

  return k;
}

Kernel parse_kernel_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open kernel file '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_kernel(os.str());
  } catch (const ParseError& e) {
    throw ParseError(e.pos(), path.string() + ": " + e.what());
  }
}

std::string pretty_print(const Kernel& k) {
  std::ostringstream os;
  os << "kernel " << k.name << "\n";
  for (const auto& [name, value] : k.params)
    os << "param " << name << " = " << value << "\n";

  // Re-derive the body_arrays annotations from the read/write sets.
  std::vector<std::string> order;
  auto mode_of = [&](const std::string& a) {
    bool r = std::find(k.body_reads.begin(), k.body_reads.end(), a) != k.body_reads.end();
    bool w = std::find(k.body_writes.begin(), k.body_writes.end(), a) != k.body_writes.end();
    return r && w ? "rw" : (r ? "r" : "w");
  };
  for (const auto& a : k.body_reads)
    if (std::find(order.begin(), order.end(), a) == order.end()) order.push_back(a);
  for (const auto& a : k.body_writes)
    if (std::find(order.begin(), order.end(), a) == order.end()) order.push_back(a);
  if (!order.empty()) {
    os << "body_arrays";
    for (const auto& a : order) os << " " << a << ":" << mode_of(a);
    os << "\n";
  }

  // Directive starts, outermost region first.
  std::vector<const DirectiveSpec*> dirs;
  for (const auto& d : k.directives) dirs.push_back(&d);
  std::stable_sort(dirs.begin(), dirs.end(),
                   [](const DirectiveSpec* a, const DirectiveSpec* b) {
                     return a->region_begin < b->region_begin;
                   });
  auto directive_line = [](const DirectiveSpec& d, bool start) {
    std::string s = "!oat$ install " + to_string(d.kind);
    if (d.kind == DirectiveKind::Exchange && !d.depths.empty()) {
      s += " (";
      for (size_t i = 0; i < d.depths.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(d.depths[i]);
      }
      s += ")";
    }
    s += start ? " region start" : " region end";
    return s;
  };
  for (const auto* d : dirs) os << directive_line(*d, true) << "\n";

  for (const auto& h : k.nest) {
    std::string indent(2 * (h.depth - 1), ' ');
    if (h.depth == k.omp_depth) os << indent << "!$omp parallel do\n";
    os << indent << "do " << h.index << " = " << h.lower.str_parenthesized() << ", "
       << h.upper.str() << "\n";
  }
  os << "begin body\n";
  for (const auto& line : k.body) os << line << "\n";
  os << "end body\n";
  for (int depth = k.depth(); depth >= 1; --depth) {
    std::string indent(2 * (depth - 1), ' ');
    os << indent << "enddo\n";
    if (depth == k.omp_depth) os << indent << "!$omp end parallel do\n";
  }

  for (auto it = dirs.rbegin(); it != dirs.rend(); ++it)
    os << directive_line(**it, false) << "\n";
  return os.str();
}

}  // namespace oatforge
