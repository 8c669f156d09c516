#include "fedsto/param_set.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedsto {

namespace {
constexpr char kCheckpointMagic[] = "FEDSTO-CKPT v1\n";
}

const char* part_name(Part part) {
  switch (part) {
    case Part::kBackbone: return "backbone";
    case Part::kNeck: return "neck";
    case Part::kHead: return "head";
  }
  return "?";
}

Part part_from_name(const std::string& name) {
  if (name == "backbone") return Part::kBackbone;
  if (name == "neck") return Part::kNeck;
  if (name == "head") return Part::kHead;
  throw std::invalid_argument("unknown part tag '" + name + "'");
}

const char* scope_name(Scope scope) {
  switch (scope) {
    case Scope::kBackbone: return "backbone";
    case Scope::kNeck: return "neck";
    case Scope::kHead: return "head";
    case Scope::kNonBackbone: return "non_backbone";
    case Scope::kModelMinusNeck: return "model_minus_neck";
    case Scope::kAll: return "all";
  }
  return "?";
}

bool scope_contains(Scope scope, Part part) {
  switch (scope) {
    case Scope::kBackbone: return part == Part::kBackbone;
    case Scope::kNeck: return part == Part::kNeck;
    case Scope::kHead: return part == Part::kHead;
    case Scope::kNonBackbone: return part != Part::kBackbone;
    case Scope::kModelMinusNeck: return part != Part::kNeck;
    case Scope::kAll: return true;
  }
  return false;
}

void ParamSet::add(std::string name, Part part, ad::Array value) {
  if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate entry '" + name + "'");
  index_[name] = static_cast<int>(entries_.size());
  entries_.push_back(ParamEntry{std::move(name), part, std::move(value)});
}

const ad::Array& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: no entry '" + name + "'");
  return entries_[static_cast<size_t>(it->second)].value;
}

ad::Array& ParamSet::at(const std::string& name) {
  return const_cast<ad::Array&>(static_cast<const ParamSet*>(this)->at(name));
}

Part ParamSet::part_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: no entry '" + name + "'");
  return entries_[static_cast<size_t>(it->second)].part;
}

int64_t ParamSet::byte_size(Scope scope) const {
  int64_t bytes = 0;
  for (const auto& e : entries_) {
    if (scope_contains(scope, e.part)) bytes += e.value.size() * static_cast<int64_t>(sizeof(float));
  }
  return bytes;
}

ParamSet ParamSet::view(Scope scope) const {
  ParamSet out;
  for (const auto& e : entries_) {
    if (scope_contains(scope, e.part)) out.add(e.name, e.part, e.value);
  }
  return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].part != other.entries_[i].part) return false;
    if (entries_[i].value.shape != other.entries_[i].value.shape) return false;
  }
  return true;
}

void ParamSet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  for (const auto& e : entries_) {
    std::ostringstream header;
    header << e.name << " " << part_name(e.part) << " ";
    for (size_t i = 0; i < e.value.shape.size(); ++i) {
      if (i) header << ",";
      header << e.value.shape[i];
    }
    header << "\n";
    std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    // little-endian float32 payload
    for (float v : e.value.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      char buf[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                     static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
      out.write(buf, 4);
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic(sizeof(kCheckpointMagic) - 1, '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kCheckpointMagic) throw std::runtime_error("bad checkpoint magic in " + path);

  ParamSet ps;
  while (true) {
    std::string header;
    if (!std::getline(in, header)) break;
    if (header.empty()) continue;
    std::istringstream hs(header);
    std::string name, part_str, dims_str;
    if (!(hs >> name >> part_str >> dims_str)) throw std::runtime_error("bad checkpoint header: " + header);
    std::vector<int> shape;
    std::istringstream ds(dims_str);
    std::string dim;
    while (std::getline(ds, dim, ',')) shape.push_back(std::stoi(dim));
    int64_t count = ad::numel(shape);
    std::vector<float> data(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
      unsigned char buf[4];
      in.read(reinterpret_cast<char*>(buf), 4);
      if (!in) throw std::runtime_error("truncated checkpoint payload in " + path);
      uint32_t bits = static_cast<uint32_t>(buf[0]) | (static_cast<uint32_t>(buf[1]) << 8) |
                      (static_cast<uint32_t>(buf[2]) << 16) | (static_cast<uint32_t>(buf[3]) << 24);
      float v;
      std::memcpy(&v, &bits, sizeof(v));
      data[static_cast<size_t>(i)] = v;
    }
    ps.add(name, part_from_name(part_str), ad::Array(std::move(shape), std::move(data)));
  }
  return ps;
}

bool bit_equal(const ParamSet& a, const ParamSet& b) {
  if (!a.same_layout(b)) return false;
  for (int i = 0; i < a.size(); ++i) {
    if (!ad::bit_equal(a.entry(i).value, b.entry(i).value)) return false;
  }
  return true;
}

}  // namespace fedsto
