#include "mixpo/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mixpo {

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'I', 'X', 'P', 'O', 'C', 'K', 'P'};

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  std::array<unsigned char, sizeof(U)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) throw std::runtime_error("checkpoint truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_checkpoint(const PolicyParams& params, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, params.vocab().size());
  put_le<std::uint32_t>(out, params.context_window());
  put_le<std::uint32_t>(out, params.num_queries());
  put_le<std::uint64_t>(out, params.num_contexts());
  for (double v : params.table().flat()) put_le<double>(out, v);
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

PolicyParams read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("not a policy checkpoint (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto vocab_size = get_le<std::uint32_t>(in);
  const auto window = get_le<std::uint32_t>(in);
  const auto num_queries = get_le<std::uint32_t>(in);
  const auto rows = get_le<std::uint64_t>(in);

  PolicyParams params(Vocab(vocab_size), num_queries, window);
  if (rows != params.num_contexts()) throw std::runtime_error("checkpoint context count inconsistent with header");
  Table table(rows, vocab_size);
  for (double& v : table.flat()) v = get_le<double>(in);
  return PolicyParams(Vocab(vocab_size), num_queries, window, std::move(table));
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(params, out);
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace mixpo
