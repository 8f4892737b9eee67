#include "mtlft/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <utility>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint blocks are little-endian; big-endian hosts need byte swaps");

namespace mtlft::io {

namespace {

constexpr const char* kMagic = "MTLFT-CHECKPOINT v1";

using nlohmann::json;

}  // namespace

const Eigen::MatrixXd& CheckpointData::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b.data;
  throw IoError("checkpoint has no block named '" + name + "'");
}

double CheckpointData::scalar(const std::string& name) const {
  const auto it = scalars.find(name);
  if (it == scalars.end())
    throw IoError("checkpoint has no scalar named '" + name + "'");
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  json header;
  header["kind"] = data.kind;
  header["seed"] = data.seed;
  header["provenance"] = data.provenance;
  header["scalars"] = data.scalars;
  header["labels"] = data.labels;
  json blocks = json::array();
  for (const auto& b : data.blocks)
    blocks.push_back({{"name", b.name}, {"rows", b.data.rows()}, {"cols", b.data.cols()}});
  header["blocks"] = std::move(blocks);

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << kMagic << '\n' << header.dump() << '\n';
    for (const auto& b : data.blocks) {
      // Blocks are row-major on disk; Eigen matrices are column-major in
      // memory, so stage each block through a row-major copy.
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
          rowmajor = b.data;
      out.write(reinterpret_cast<const char*>(rowmajor.data()),
                static_cast<std::streamsize>(sizeof(double)) * rowmajor.size());
    }
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() +
                        "': " + ec.message());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kMagic)
    throw IoError("'" + path.string() + "' is not a checkpoint (bad magic line)");
  if (!std::getline(in, header_line))
    throw IoError("'" + path.string() + "' is truncated (missing header)");

  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header in '" + path.string() + "': " + e.what());
  }

  CheckpointData data;
  try {
    data.kind = header.at("kind").get<std::string>();
    data.seed = header.at("seed").get<std::uint64_t>();
    data.provenance = header.value("provenance", std::string{});
    if (header.contains("scalars"))
      data.scalars = header["scalars"].get<std::map<std::string, double>>();
    if (header.contains("labels"))
      data.labels = header["labels"].get<std::map<std::string, std::string>>();
    for (const auto& b : header.at("blocks")) {
      Block block;
      block.name = b.at("name").get<std::string>();
      const auto rows = b.at("rows").get<Eigen::Index>();
      const auto cols = b.at("cols").get<Eigen::Index>();
      if (rows < 0 || cols < 0)
        throw IoError("negative block shape in '" + path.string() + "'");
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rowmajor(
          rows, cols);
      in.read(reinterpret_cast<char*>(rowmajor.data()),
              static_cast<std::streamsize>(sizeof(double)) * rowmajor.size());
      if (!in)
        throw IoError("'" + path.string() + "' is truncated inside block '" +
                      block.name + "'");
      block.data = rowmajor;
      data.blocks.push_back(std::move(block));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header in '" + path.string() + "': " + e.what());
  }
  return data;
}

void save_diag_net(const std::filesystem::path& path, const nets::DiagonalLinearNet& net,
                   std::uint64_t seed, const std::string& provenance) {
  CheckpointData data;
  data.kind = "diag_net";
  data.seed = seed;
  data.provenance = provenance;
  data.scalars = {{"D", static_cast<double>(net.dim())},
                  {"O", static_cast<double>(net.outputs())}};
  data.blocks = {{"w_plus", net.w_plus},
                 {"w_minus", net.w_minus},
                 {"v_plus", net.v_plus},
                 {"v_minus", net.v_minus}};
  save_checkpoint(path, data);
}

nets::DiagonalLinearNet load_diag_net(const std::filesystem::path& path) {
  const CheckpointData data = load_checkpoint(path);
  if (data.kind != "diag_net")
    throw IoError("'" + path.string() + "' holds kind '" + data.kind +
                  "', expected diag_net");
  nets::DiagonalLinearNet net;
  net.w_plus = data.block("w_plus");
  net.w_minus = data.block("w_minus");
  net.v_plus = data.block("v_plus");
  net.v_minus = data.block("v_minus");
  return net;
}

void save_relu_net(const std::filesystem::path& path, const nets::ReluNet& net,
                   std::uint64_t seed, const std::string& provenance) {
  CheckpointData data;
  data.kind = "relu_net";
  data.seed = seed;
  data.provenance = provenance;
  data.scalars = {{"D", static_cast<double>(net.dim())},
                  {"H", static_cast<double>(net.units())},
                  {"O", static_cast<double>(net.outputs())}};
  data.blocks = {{"hidden", net.hidden}, {"readout", net.readout}};
  save_checkpoint(path, data);
}

nets::ReluNet load_relu_net(const std::filesystem::path& path) {
  const CheckpointData data = load_checkpoint(path);
  if (data.kind != "relu_net")
    throw IoError("'" + path.string() + "' holds kind '" + data.kind +
                  "', expected relu_net");
  nets::ReluNet net;
  net.hidden = data.block("hidden");
  net.readout = data.block("readout");
  return net;
}

void save_activations(const std::filesystem::path& path, const Eigen::MatrixXd& X,
                      std::uint64_t seed, const std::string& provenance) {
  CheckpointData data;
  data.kind = "activations";
  data.seed = seed;
  data.provenance = provenance;
  data.blocks = {{"X", X}};
  save_checkpoint(path, data);
}

Eigen::MatrixXd load_activations(const std::filesystem::path& path) {
  const CheckpointData data = load_checkpoint(path);
  if (data.kind != "activations")
    throw IoError("'" + path.string() + "' holds kind '" + data.kind +
                  "', expected activations");
  return data.block("X");
}

}  // namespace mtlft::io
