#include "bmaguard/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "bmaguard/error.hpp"

namespace bmaguard {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'M', 'A', 'G', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw ParseError("truncated checkpoint", 0);
  return v;
}

std::string get_bytes(std::istream& in, std::uint32_t n) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw ParseError("truncated checkpoint", 0);
  return s;
}

template <typename From, typename S>
void read_values(std::istream& in, Mat<S>& m) {
  std::vector<From> buf(static_cast<std::size_t>(m.size()));
  if (!buf.empty() && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(From))))
    throw ParseError("truncated checkpoint", 0);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(buf[k++]);
}

} // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const DualBranchClassifier<S>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, sizeof(S));
  const std::string cfg = nlohmann::json(model.config()).dump();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto& params = model.params();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& m = params[i];
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(S)));
  }
  if (!out) throw IoError("short write to " + path.string());
}

template <typename S>
DualBranchClassifier<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw ParseError("not a checkpoint file", 0);
  const auto version = get_u32(in);
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  const auto width = get_u32(in);
  if (width != 4 && width != 8) throw ParseError("unsupported scalar width", 0);
  ModelConfig config;
  try {
    config = nlohmann::json::parse(get_bytes(in, get_u32(in))).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad config block: ") + e.what(), 0);
  }
  const auto count = get_u32(in);
  ParamSet<S> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get_u32(in));
    const auto rows = get_u32(in), cols = get_u32(in);
    const std::size_t idx = params.add(std::move(name), rows, cols);
    if (width == 4) read_values<float>(in, params[idx]);
    else read_values<double>(in, params[idx]);
  }
  return DualBranchClassifier<S>(config, std::move(params));
}

template void save_checkpoint<float>(const std::filesystem::path&, const DualBranchClassifier<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const DualBranchClassifier<double>&);
template DualBranchClassifier<float> load_checkpoint<float>(const std::filesystem::path&);
template DualBranchClassifier<double> load_checkpoint<double>(const std::filesystem::path&);

} // namespace bmaguard
