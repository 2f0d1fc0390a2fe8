#include "stopwalk/group.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>

namespace stopwalk {

namespace {

std::int32_t parse_int(std::string_view text, std::string_view what) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  std::int32_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw usage_error("malformed integer '" + std::string(text) + "' in " + std::string(what));
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == sep) {
      parts.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

void require_same_kind(const Group& group, const Element& a) {
  if (a.kind() != group.kind()) {
    throw usage_error("element kind does not match group " + group.name());
  }
}

// Symmetric difference of two sorted duplicate-free ranges, the second one
// shifted by `offset`.
template <typename Out>
void toggle_lamps(const std::int32_t* a, const std::int32_t* a_end, const std::int32_t* b,
                  const std::int32_t* b_end, std::int32_t offset, Out& out) {
  while (a != a_end || b != b_end) {
    if (b == b_end || (a != a_end && *a < *b + offset)) {
      out.push_back(*a++);
    } else if (a == a_end || *b + offset < *a) {
      out.push_back(*b++ + offset);
    } else {
      ++a;
      ++b;
    }
  }
}

}  // namespace

Group::Group(GroupKind kind, int parameter) : kind_(kind), parameter_(parameter) {
  generators_ = standard_generators(*this);
}

Group Group::lattice(int dimension) {
  if (dimension < 1) throw usage_error("lattice dimension must be >= 1");
  return Group(GroupKind::lattice, dimension);
}

Group Group::free(int rank) {
  if (rank < 1 || rank > 26) throw usage_error("free group rank must be in [1, 26]");
  return Group(GroupKind::free, rank);
}

Group Group::lamplighter() { return Group(GroupKind::lamplighter, 0); }

Group Group::cyclic(int order) {
  if (order < 1) throw usage_error("cyclic group order must be >= 1");
  return Group(GroupKind::cyclic, order);
}

Group Group::with_generators(std::vector<Element> generators) const {
  const Element e = identity();
  for (const auto& g : generators) {
    require_member(*this, g);
    if (g == e) throw usage_error("identity listed as a generator");
    const Element inv = inverse(*this, g);
    if (std::find(generators.begin(), generators.end(), inv) == generators.end()) {
      throw usage_error("generating set not closed under inversion: missing inverse of " +
                        encode(*this, g));
    }
  }
  auto sorted = [this](std::vector<Element> v) {
    std::sort(v.begin(), v.end(),
              [this](const Element& a, const Element& b) { return encoding_less(*this, a, b); });
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  Group result = *this;
  result.standard_ = sorted(generators) == sorted(standard_generators(*this));
  result.generators_ = std::move(generators);
  return result;
}

Element Group::identity() const {
  switch (kind_) {
    case GroupKind::lattice: return Element(kind_, Element::Storage(parameter_, 0));
    case GroupKind::free: return Element(kind_, {});
    case GroupKind::lamplighter: return Element(kind_, {0});
    case GroupKind::cyclic: return Element(kind_, {0});
  }
  return {};
}

std::string Group::name() const {
  switch (kind_) {
    case GroupKind::lattice: return "Z^" + std::to_string(parameter_);
    case GroupKind::free: return "F" + std::to_string(parameter_);
    case GroupKind::lamplighter: return "Lamplighter";
    case GroupKind::cyclic: return "Z/" + std::to_string(parameter_);
  }
  return "?";
}

std::vector<Element> standard_generators(const Group& group) {
  std::vector<Element> gens;
  const GroupKind kind = group.kind();
  switch (kind) {
    case GroupKind::lattice:
      for (int i = 0; i < group.parameter(); ++i) {
        Element::Storage up(group.parameter(), 0), down(group.parameter(), 0);
        up[i] = 1;
        down[i] = -1;
        gens.emplace_back(kind, up);
        gens.emplace_back(kind, down);
      }
      break;
    case GroupKind::free:
      for (int i = 1; i <= group.parameter(); ++i) {
        gens.emplace_back(kind, Element::Storage{i});
        gens.emplace_back(kind, Element::Storage{-i});
      }
      break;
    case GroupKind::lamplighter:
      gens.emplace_back(kind, Element::Storage{1});
      gens.emplace_back(kind, Element::Storage{-1});
      gens.emplace_back(kind, Element::Storage{0, 0});
      break;
    case GroupKind::cyclic: {
      const int n = group.parameter();
      if (n >= 2) gens.emplace_back(kind, Element::Storage{1});
      if (n >= 3) gens.emplace_back(kind, Element::Storage{n - 1});
      break;
    }
  }
  return gens;
}

bool is_member(const Group& group, const Element& g) {
  if (g.kind() != group.kind()) return false;
  const auto& d = g.data();
  switch (group.kind()) {
    case GroupKind::lattice:
      return static_cast<int>(d.size()) == group.parameter();
    case GroupKind::free:
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] == 0 || std::abs(d[i]) > group.parameter()) return false;
        if (i > 0 && d[i] == -d[i - 1]) return false;
      }
      return true;
    case GroupKind::lamplighter:
      if (d.empty()) return false;
      for (std::size_t i = 2; i < d.size(); ++i) {
        if (d[i] <= d[i - 1]) return false;
      }
      return true;
    case GroupKind::cyclic:
      return d.size() == 1 && d[0] >= 0 && d[0] < group.parameter();
  }
  return false;
}

void require_member(const Group& group, const Element& g) {
  if (!is_member(group, g)) {
    throw usage_error("element is not a canonical member of " + group.name());
  }
}

void multiply_into(const Group& group, Element& acc, const Element& rhs) {
  require_same_kind(group, acc);
  require_same_kind(group, rhs);
  auto& a = acc.data();
  const auto& b = rhs.data();
  switch (group.kind()) {
    case GroupKind::lattice:
      if (a.size() != b.size()) throw usage_error("lattice dimension mismatch");
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
      return;
    case GroupKind::free:
      for (std::int32_t letter : b) {
        if (!a.empty() && a.back() == -letter) {
          a.pop_back();
        } else {
          a.push_back(letter);
        }
      }
      return;
    case GroupKind::lamplighter: {
      if (a.empty() || b.empty()) throw usage_error("malformed lamplighter element");
      const std::int32_t shift = a[0];
      Element::Storage out;
      out.reserve(a.size() + b.size());
      out.push_back(a[0] + b[0]);
      toggle_lamps(a.data() + 1, a.data() + a.size(), b.data() + 1, b.data() + b.size(), shift, out);
      a = std::move(out);
      return;
    }
    case GroupKind::cyclic: {
      const std::int64_t n = group.parameter();
      a[0] = static_cast<std::int32_t>((static_cast<std::int64_t>(a[0]) + b[0]) % n);
      return;
    }
  }
}

Element multiply(const Group& group, const Element& a, const Element& b) {
  Element result = a;
  multiply_into(group, result, b);
  return result;
}

Element inverse(const Group& group, const Element& a) {
  require_same_kind(group, a);
  const auto& d = a.data();
  Element::Storage out;
  switch (group.kind()) {
    case GroupKind::lattice:
      for (auto x : d) out.push_back(-x);
      break;
    case GroupKind::free:
      for (auto it = d.rbegin(); it != d.rend(); ++it) out.push_back(-*it);
      break;
    case GroupKind::lamplighter:
      // (L, p)^{-1} = (L - p, -p)
      out.push_back(-d[0]);
      for (std::size_t i = 1; i < d.size(); ++i) out.push_back(d[i] - d[0]);
      break;
    case GroupKind::cyclic:
      out.push_back((group.parameter() - d[0]) % group.parameter());
      break;
  }
  return Element(group.kind(), std::move(out));
}

std::string encode(const Group& group, const Element& g) {
  require_same_kind(group, g);
  const auto& d = g.data();
  std::string s;
  switch (group.kind()) {
    case GroupKind::lattice:
      s = "(";
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(d[i]);
      }
      s += ')';
      break;
    case GroupKind::free:
      if (d.empty()) return "1";
      for (auto letter : d) {
        const char base = letter > 0 ? 'a' : 'A';
        s += static_cast<char>(base + std::abs(letter) - 1);
      }
      break;
    case GroupKind::lamplighter:
      s = "{";
      for (std::size_t i = 1; i < d.size(); ++i) {
        if (i > 1) s += ',';
        s += std::to_string(d[i]);
      }
      s += "}|" + std::to_string(d[0]);
      break;
    case GroupKind::cyclic:
      s = std::to_string(d[0]) + " mod " + std::to_string(group.parameter());
      break;
  }
  return s;
}

Element decode(const Group& group, std::string_view text) {
  const GroupKind kind = group.kind();
  auto fail = [&](const char* why) {
    return usage_error("cannot decode '" + std::string(text) + "' as element of " + group.name() +
                       ": " + why);
  };
  switch (kind) {
    case GroupKind::lattice: {
      std::string_view body = text;
      const bool parenthesized = !body.empty() && body.front() == '(';
      if (parenthesized) {
        if (body.back() != ')') throw fail("unbalanced parentheses");
        body = body.substr(1, body.size() - 2);
      } else if (group.parameter() != 1) {
        throw fail("expected (x1,...,xd)");
      }
      Element::Storage coords;
      for (auto part : split(body, ',')) coords.push_back(parse_int(part, "lattice element"));
      if (static_cast<int>(coords.size()) != group.parameter()) throw fail("wrong dimension");
      return Element(kind, std::move(coords));
    }
    case GroupKind::free: {
      Element result(kind, {});
      bool any = false;
      for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (c == '1' && !any) {
          any = true;
          continue;
        }
        int letter = 0;
        if (c >= 'a' && c <= 'z') letter = c - 'a' + 1;
        else if (c >= 'A' && c <= 'Z') letter = -(c - 'A' + 1);
        if (letter == 0 || std::abs(letter) > group.parameter()) throw fail("bad letter");
        any = true;
        multiply_into(group, result, Element(kind, {letter}));
      }
      if (!any) throw fail("empty word");
      return result;
    }
    case GroupKind::lamplighter: {
      const auto bar = text.find('|');
      if (bar == std::string_view::npos) throw fail("expected {lamps}|position");
      std::string_view lamps = text.substr(0, bar);
      if (lamps.size() < 2 || lamps.front() != '{' || lamps.back() != '}') throw fail("expected {lamps}");
      lamps = lamps.substr(1, lamps.size() - 2);
      Element::Storage data{parse_int(text.substr(bar + 1), "lamplighter position")};
      std::vector<std::int32_t> lit;
      if (!lamps.empty()) {
        for (auto part : split(lamps, ',')) lit.push_back(parse_int(part, "lamp position"));
      }
      std::sort(lit.begin(), lit.end());
      if (std::adjacent_find(lit.begin(), lit.end()) != lit.end()) throw fail("duplicate lamp");
      data.insert(data.end(), lit.begin(), lit.end());
      return Element(kind, std::move(data));
    }
    case GroupKind::cyclic: {
      const auto pos = text.find("mod");
      const std::int32_t r = parse_int(text.substr(0, pos), "cyclic residue");
      if (pos != std::string_view::npos &&
          parse_int(text.substr(pos + 3), "cyclic modulus") != group.parameter()) {
        throw fail("modulus does not match group order");
      }
      if (r < 0 || r >= group.parameter()) throw fail("residue out of range");
      return Element(kind, {r});
    }
  }
  throw fail("unknown group kind");
}

bool encoding_less(const Group& group, const Element& a, const Element& b) {
  return encode(group, a) < encode(group, b);
}

}  // namespace stopwalk
