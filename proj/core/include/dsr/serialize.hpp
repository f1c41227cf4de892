#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsr/model.hpp"
#include "dsr/params.hpp"
#include "dsr/synthetic.hpp"

namespace dsr {

// Binary containers are little-endian with fixed-width fields; strings are a
// u32 length plus raw bytes, tensors a u32 rank, i32 dims and f64 payload.
// Both carry a 4-byte magic, a u32 format version and a config hash so stale
// files fail loudly. docs/formats.md holds the byte-level layout and golden
// samples.

std::uint64_t task_config_hash(const SyntheticTaskConfig& cfg);

// all parameters of a model, keyed by registration name
void save_checkpoint(const std::string& path, const ParamStore& store,
                     std::uint64_t config_hash);
// copies values into the already-constructed parameter set; parameter names,
// shapes and the config hash must match exactly
void load_checkpoint(const std::string& path, ParamStore& store, std::uint64_t config_hash);

void save_dataset(const std::string& path, const TaskDataset& ds);
TaskDataset load_dataset(const std::string& path);

// one JSON object per line: {"step":..,"loss":..,"reg":..,"accuracy":..}
void write_metrics_jsonl(const std::string& path, const std::vector<StepMetrics>& steps);

// sampling records of one pass: a "ref" line per query and a "sample" line
// per (layer, head, query, point) with the clamped location and weight
void write_sample_dump(const std::string& path, const SampledTokenSet& tokens);

// plain-text configuration: one `key = value` per line, '#' comments,
// later keys override earlier ones
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace dsr
