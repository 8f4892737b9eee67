#pragma once

// Checkpoint file format shared by the model, dataset, and analysis layers.
//
// Layout on disk (UTF-8 text header, then raw binary):
//   line 1: magic string "MTLFT-CHECKPOINT v1"
//   line 2: one-line JSON object with keys
//             kind        — "diag_net" | "relu_net" | "dataset" | "activations"
//             seed        — unsigned integer recorded by the producer
//             provenance  — free-form origin string
//             scalars     — object of named numbers (architecture sizes, ...)
//             labels      — object of named strings (task ids, fingerprints, ...)
//             blocks      — array of {name, rows, cols} in declared order
//   then, for each block in declared order: rows*cols IEEE-754 float64
//   values, row-major, little-endian, no padding.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mtlft/errors.hpp"
#include "mtlft/nets.hpp"

namespace mtlft::io {

struct Block {
  std::string name;
  Eigen::MatrixXd data;
};

struct CheckpointData {
  std::string kind;
  std::uint64_t seed = 0;
  std::string provenance;
  std::map<std::string, double> scalars;
  std::map<std::string, std::string> labels;
  std::vector<Block> blocks;

  const Eigen::MatrixXd& block(const std::string& name) const;
  double scalar(const std::string& name) const;
};

// Writes atomically (temp file + rename). Throws IoError on failure.
void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data);

// Throws IoError on missing file, bad magic, malformed header, or truncation.
CheckpointData load_checkpoint(const std::filesystem::path& path);

// Typed wrappers for network checkpoints.
void save_diag_net(const std::filesystem::path& path, const nets::DiagonalLinearNet& net,
                   std::uint64_t seed, const std::string& provenance);
nets::DiagonalLinearNet load_diag_net(const std::filesystem::path& path);

void save_relu_net(const std::filesystem::path& path, const nets::ReluNet& net,
                   std::uint64_t seed, const std::string& provenance);
nets::ReluNet load_relu_net(const std::filesystem::path& path);

// Single-matrix checkpoint of kind "activations" (block name "X").
void save_activations(const std::filesystem::path& path, const Eigen::MatrixXd& X,
                      std::uint64_t seed, const std::string& provenance);
Eigen::MatrixXd load_activations(const std::filesystem::path& path);

}  // namespace mtlft::io
