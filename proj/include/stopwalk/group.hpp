#pragma once

// Concrete countable groups: Z^d, free groups F_k, the lamplighter Z_2 wr Z
// and finite cyclic groups, with canonical element storage and text encoding.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <absl/container/inlined_vector.h>
#include <absl/hash/hash.h>

#include "stopwalk/errors.hpp"

namespace stopwalk {

enum class GroupKind : std::uint8_t { lattice, free, lamplighter, cyclic };

/// Canonical group element. The interpretation of the integer payload
/// depends on the kind:
///   lattice      coordinates (x_1, ..., x_d)
///   free         letters, +i for generator i (1-based), -i for its inverse;
///                never two adjacent letters that cancel
///   lamplighter  marker position followed by the sorted lit lamp positions
///   cyclic       a single residue in [0, n)
/// Equal elements always have identical payloads.
class Element {
 public:
  using Storage = absl::InlinedVector<std::int32_t, 12>;

  Element() = default;
  Element(GroupKind kind, Storage data) : kind_(kind), data_(std::move(data)) {}

  GroupKind kind() const { return kind_; }
  const Storage& data() const { return data_; }
  Storage& data() { return data_; }

  friend bool operator==(const Element& a, const Element& b) {
    return a.kind_ == b.kind_ && a.data_ == b.data_;
  }

  template <typename H>
  friend H AbslHashValue(H h, const Element& e) {
    return H::combine(std::move(h), e.kind_,
                      absl::MakeSpan(e.data_.data(), e.data_.size()));
  }

 private:
  GroupKind kind_ = GroupKind::lattice;
  Storage data_;
};

/// A group together with a finite symmetric generating set.
class Group {
 public:
  static Group lattice(int dimension);
  static Group free(int rank);
  static Group lamplighter();
  static Group cyclic(int order);

  /// Replaces the generating set. Throws usage_error unless the set is
  /// closed under inversion and omits the identity.
  Group with_generators(std::vector<Element> generators) const;

  GroupKind kind() const { return kind_; }
  /// d for Z^d, k for F_k, n for Z/n, 0 for the lamplighter.
  int parameter() const { return parameter_; }
  const std::vector<Element>& generators() const { return generators_; }
  bool has_standard_generators() const { return standard_; }

  Element identity() const;
  std::string name() const;

  friend bool operator==(const Group& a, const Group& b) {
    return a.kind_ == b.kind_ && a.parameter_ == b.parameter_ &&
           a.generators_ == b.generators_;
  }

 private:
  Group(GroupKind kind, int parameter);

  GroupKind kind_;
  int parameter_;
  std::vector<Element> generators_;
  bool standard_ = true;
};

std::vector<Element> standard_generators(const Group& group);

bool is_member(const Group& group, const Element& g);
/// Throws usage_error when g does not belong to group.
void require_member(const Group& group, const Element& g);

Element multiply(const Group& group, const Element& a, const Element& b);
/// acc <- acc * rhs, reusing acc's storage. Free-group products only touch
/// the tail of acc, so accumulating a walk costs O(|rhs|) per step.
void multiply_into(const Group& group, Element& acc, const Element& rhs);
Element inverse(const Group& group, const Element& a);

/// Canonical text form: "(1,-2)", "aBa" (identity "e"), "{-1,3}|2", "3 mod 5".
std::string encode(const Group& group, const Element& g);
/// Inverse of encode. Free words may also be written with spaces ("a b")
/// and are reduced on input. Throws usage_error on malformed text.
Element decode(const Group& group, std::string_view text);

/// Strict weak order on elements by canonical encoding.
bool encoding_less(const Group& group, const Element& a, const Element& b);

}  // namespace stopwalk
