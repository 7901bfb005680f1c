#include "smpcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "smpcl/error.hpp"
#include "smpcl/io.hpp"

namespace smpcl {

namespace {

constexpr const char* kMagic = "SMPCLCKPT";

void put_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

bool has_space(const std::string& s) { return s.find_first_of(" \t\r\n") != std::string::npos; }

}  // namespace

const CheckpointData::Entry* CheckpointData::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params,
                     const std::map<std::string, std::string>& meta) {
  std::ostringstream head;
  head << kMagic << " 1 f32 " << params.size() << ' ' << meta.size() << '\n';
  for (const auto& [k, v] : meta) {
    if (k.empty() || has_space(k) || v.find('\n') != std::string::npos) {
      throw ValidationError("checkpoint meta entry '" + k + "' is not storable");
    }
    head << "meta " << k << ' ' << v << '\n';
  }
  std::size_t offset = 0;
  for (const auto& [name, t] : params.entries()) {
    if (has_space(name)) throw ValidationError("parameter name '" + name + "' contains whitespace");
    head << "tensor " << name << ' ' << offset << ' ' << t.rank();
    for (auto d : t.shape()) head << ' ' << d;
    head << '\n';
    offset += t.numel();
  }
  head << "END\n";
  std::string bytes = head.str();
  bytes.reserve(bytes.size() + 4 * offset);
  for (const auto& e : params.entries()) {
    for (T v : e.second.data()) put_le(bytes, static_cast<float>(v));
  }
  atomic_write(path, bytes);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  auto fail = [&](const std::string& why) {
    throw ValidationError("checkpoint " + path.string() + ": " + why);
  };

  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto end = bytes.find('\n', pos);
    if (end == std::string::npos) fail("truncated header");
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };

  std::istringstream first(next_line());
  std::string magic, dtype;
  int version = 0;
  std::size_t n_entries = 0, n_meta = 0;
  if (!(first >> magic >> version >> dtype >> n_entries >> n_meta) || magic != kMagic) {
    fail("bad magic header");
  }
  if (version != 1 || dtype != "f32") fail("unsupported version or dtype");

  CheckpointData data;
  for (std::size_t i = 0; i < n_meta; ++i) {
    const auto line = next_line();
    if (line.rfind("meta ", 0) != 0) fail("expected meta line");
    const auto sep = line.find(' ', 5);
    if (sep == std::string::npos) {
      data.meta[line.substr(5)] = "";
    } else {
      data.meta[line.substr(5, sep - 5)] = line.substr(sep + 1);
    }
  }
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < n_entries; ++i) {
    std::istringstream ls(next_line());
    std::string tag;
    CheckpointData::Entry e;
    std::size_t offset = 0, rank = 0;
    if (!(ls >> tag >> e.name >> offset >> rank) || tag != "tensor") fail("bad tensor line");
    e.shape.resize(rank);
    for (auto& d : e.shape) {
      if (!(ls >> d) || d == 0) fail("bad shape for " + e.name);
    }
    offsets.push_back(offset);
    data.entries.push_back(std::move(e));
  }
  if (next_line() != "END") fail("missing END marker");

  const std::size_t blob = pos;
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < data.entries.size(); ++i) {
    auto& e = data.entries[i];
    const std::size_t n = shape_numel(e.shape);
    if (blob + 4 * (offsets[i] + n) > bytes.size()) fail("blob truncated at " + e.name);
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) e.values[k] = get_le(raw + blob + 4 * (offsets[i] + k));
  }
  return data;
}

template <typename T>
void assign_parameters(const CheckpointData& data, const ParameterSet<T>& params,
                       const std::string& prefix) {
  for (auto [name, t] : params.entries()) {
    const auto* e = data.find(prefix + name);
    if (!e) throw ValidationError("checkpoint lacks parameter " + prefix + name);
    if (e->shape != t.shape()) {
      throw ValidationError("checkpoint parameter " + prefix + name + " has shape " +
                            shape_str(e->shape) + ", expected " + shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(e->values[k]);
  }
}

template void save_checkpoint<float>(const std::filesystem::path&, const ParameterSet<float>&,
                                     const std::map<std::string, std::string>&);
template void save_checkpoint<double>(const std::filesystem::path&, const ParameterSet<double>&,
                                      const std::map<std::string, std::string>&);
template void assign_parameters<float>(const CheckpointData&, const ParameterSet<float>&,
                                       const std::string&);
template void assign_parameters<double>(const CheckpointData&, const ParameterSet<double>&,
                                        const std::string&);

}  // namespace smpcl
