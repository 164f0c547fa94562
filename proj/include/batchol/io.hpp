#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "batchol/datagen.hpp"
#include "batchol/learner.hpp"
#include "batchol/sparse.hpp"

namespace batchol {

// Example text format:
//
//   #day <id>
//   <label> <index>:<value> <index>:<value> ...
//
// Labels are 0 or 1, indices strictly increasing within a line, day ids
// strictly increasing through the file. Blank lines and other lines that
// start with '#' are ignored.

std::vector<Batch> parse_examples(std::istream& in);
std::vector<Batch> parse_examples(const std::filesystem::path& path);

void write_examples(std::ostream& out, std::span<const Batch> batches);
void write_examples(const std::filesystem::path& path, std::span<const Batch> batches);

/// Sidecar with one line per day: `<day> <bias> <w_0> ... <w_{d-1}>`.
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::filesystem::path& path);

// Snapshot container, versioned text with hexadecimal floats so values
// round-trip exactly:
//
//   batchol-snapshot 1
//   dimension <d>
//   batch_id <id>
//   bias <hex>
//   weights <hex> x d
//   [counts <u64> x (d+1)]
//   [fisher <hex> x (d+1)]
//   end

void write_snapshot(std::ostream& out, const Snapshot& snapshot);
void write_snapshot(const std::filesystem::path& path, const Snapshot& snapshot);
Snapshot read_snapshot(std::istream& in);
Snapshot read_snapshot(const std::filesystem::path& path);

}  // namespace batchol
