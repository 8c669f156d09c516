#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsto/array.hpp"

namespace fedsto {

enum class Part { kBackbone, kNeck, kHead };

// Parameter scopes used for partition views, training masks, aggregation and
// upload accounting. kModelMinusNeck = backbone + head.
enum class Scope { kBackbone, kNeck, kHead, kNonBackbone, kModelMinusNeck, kAll };

const char* part_name(Part part);
Part part_from_name(const std::string& name);
const char* scope_name(Scope scope);
bool scope_contains(Scope scope, Part part);

struct ParamEntry {
  std::string name;
  Part part;
  ad::Array value;
};

// Named, shaped parameter arrays partitioned into backbone / neck / head.
// Entry order is fixed at construction and identical across clients, which
// makes aggregation and checkpoint layout deterministic. Treated as an
// immutable value: updates build a new ParamSet.
class ParamSet {
 public:
  ParamSet() = default;

  void add(std::string name, Part part, ad::Array value);

  int size() const { return static_cast<int>(entries_.size()); }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  const ParamEntry& entry(int i) const { return entries_.at(static_cast<size_t>(i)); }
  ParamEntry& entry(int i) { return entries_.at(static_cast<size_t>(i)); }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const ad::Array& at(const std::string& name) const;
  ad::Array& at(const std::string& name);
  Part part_of(const std::string& name) const;

  int64_t byte_size(Scope scope = Scope::kAll) const;

  // Restriction to a scope, preserving entry order.
  ParamSet view(Scope scope) const;

  bool same_layout(const ParamSet& other) const;

  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, int> index_;
};

bool bit_equal(const ParamSet& a, const ParamSet& b);

}  // namespace fedsto
