#include "dfgp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace dfgp {

namespace {

constexpr char kMagic[8] = {'D', 'F', 'G', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.write(buf, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.write(buf, 8);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  char buf[4];
  in.read(buf, 4);
  if (!in) throw ParseError("checkpoint: truncated file");
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  if (!in) throw ParseError("checkpoint: truncated file");
  std::uint64_t v;
  std::memcpy(&v, buf, 8);
  return v;
}

std::string read_string(std::istream& in) {
  const std::uint64_t len = read_u64(in);
  if (len > (1ull << 32)) throw ParseError("checkpoint: implausible string length");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");

  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_string(out, config_echo);

  write_u64(out, params.series_ids.size());
  for (const std::string& id : params.series_ids) write_string(out, id);

  const auto named = params.named_parameters();
  write_u64(out, named.size());
  for (const auto& [name, tensor] : named) {
    write_string(out, name);
    write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t dim : tensor.shape()) write_u64(out, dim);
    const auto values = tensor.values();
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  if (!out) throw ParseError("failed while writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("'" + path + "' is not a dfgp checkpoint");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw ParseError("checkpoint format version " + std::to_string(version) + " is unsupported");
  }

  Checkpoint ckpt;
  ckpt.config_echo = read_string(in);

  const std::uint64_t n_series = read_u64(in);
  ckpt.params.series_ids.reserve(n_series);
  for (std::uint64_t i = 0; i < n_series; ++i) ckpt.params.series_ids.push_back(read_string(in));

  std::map<std::string, Tensor> tensors;
  const std::uint64_t n_tensors = read_u64(in);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    const std::string name = read_string(in);
    const std::uint32_t rank = read_u32(in);
    Shape shape(rank);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = read_u64(in);
      count *= shape[d];
    }
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw ParseError("checkpoint: truncated tensor '" + name + "'");
    tensors.emplace(name, Tensor(std::move(shape), std::move(values), true));
  }

  auto take = [&](const char* name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParseError("checkpoint: missing tensor '" + std::string(name) + "'");
    return it->second;
  };

  ckpt.params.lstm.w_input = take("lstm.w_input");
  ckpt.params.lstm.w_recur = take("lstm.w_recur");
  ckpt.params.lstm.bias = take("lstm.bias");
  ckpt.params.lstm.hidden_dim = ckpt.params.lstm.w_recur.dim(1);
  ckpt.params.lstm.input_dim = ckpt.params.lstm.w_input.dim(1);
  ckpt.params.projection.weight = take("projection.weight");
  ckpt.params.projection.bias = take("projection.bias");
  ckpt.params.embeddings.table = take("embeddings.table");
  ckpt.params.kernel.log_amplitude = take("kernel.log_amplitude");
  ckpt.params.kernel.log_lengthscale = take("kernel.log_lengthscale");
  ckpt.params.kernel.log_noise = take("kernel.log_noise");

  if (ckpt.params.embeddings.table.dim(0) != ckpt.params.series_ids.size()) {
    throw ParseError("checkpoint: embedding table does not match the series id list");
  }
  return ckpt;
}

}  // namespace dfgp
