#pragma once

// ACTD container: a stream of records, each
//
//   "ACTD"  u16 version (LE)  u32 metadata length (LE)  UTF-8 JSON metadata
//   then one tensor record per entry of metadata["tensors"]:
//   u8 dtype (0 = float32 LE, 1 = float64 LE)  u8 ndim  ndim x u32 dims (LE)
//   row-major payload
//
// Activation dumps, CCA projections and nullspace projectors are all stored
// as records; metadata["kind"] tells them apart.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "idiolens/error.hpp"
#include "idiolens/tensor.hpp"

namespace idiolens {

inline constexpr char kActdMagic[4] = {'A', 'C', 'T', 'D'};
inline constexpr std::uint16_t kActdVersion = 1;
inline constexpr std::size_t kMaxTensorRank = 8;
inline constexpr std::uint64_t kMaxTensorElements = std::uint64_t{1} << 32;
inline constexpr std::uint32_t kMaxMetadataBytes = 64u << 20;

enum class DumpErrc {
  bad_magic = 1,
  unsupported_version,
  bad_metadata,
  unsupported_dtype,
  dimension_overflow,
  truncated,
};

const char* to_string(DumpErrc code) noexcept;

class DumpError : public Error {
 public:
  DumpError(DumpErrc code, const std::string& what);
  DumpErrc code() const noexcept { return code_; }

 private:
  DumpErrc code_;
};

struct Record {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::string> roles;
  std::vector<AnyTensor> tensors;

  const AnyTensor* find(std::string_view role) const;
};

/// Returns the number of bytes written.
std::size_t write_record(std::ostream& out, const Record& record);
/// Returns nullopt at a clean end of stream; throws DumpError otherwise.
std::optional<Record> read_record(std::istream& in);

std::vector<Record> read_records(const std::filesystem::path& file);
void write_records(const std::filesystem::path& file, std::span<const Record> records);

struct DumpVariant {
  enum class Kind { normal, masked, projected };
  Kind kind = Kind::normal;
  int masked_token = -1;  // source subtoken index
  int masked_layer = -1;  // 1-based encoder layer whose attention was masked
  std::string projector_id;
  std::vector<int> projected_layers;

  friend bool operator==(const DumpVariant&, const DumpVariant&) = default;
};

std::string_view to_string(DumpVariant::Kind kind) noexcept;

/// Per-sentence activations. Subword maps hold the word index of every
/// subtoken, or -1 for special tokens such as the end-of-sequence marker.
struct ActivationDump {
  std::string sentence_id;
  std::vector<std::string> source_subtokens;
  std::vector<std::string> target_subtokens;
  std::vector<int> subword_to_word_src;
  std::vector<int> subword_to_word_tgt;
  int eos_index = -1;
  DumpVariant variant;
  FloatTensor enc_self_attn;  // [L][H][S][S]
  FloatTensor cross_attn;     // [L][H][T][S], may be empty
  FloatTensor enc_hidden;     // [L+1][S][D], may be empty; index 0 = embeddings

  int layers() const { return enc_self_attn.empty() ? 0 : static_cast<int>(enc_self_attn.dim(0)); }
  int heads() const { return enc_self_attn.empty() ? 0 : static_cast<int>(enc_self_attn.dim(1)); }
  int src_len() const { return static_cast<int>(source_subtokens.size()); }
  int tgt_len() const { return static_cast<int>(target_subtokens.size()); }
  int hidden_dim() const { return enc_hidden.empty() ? 0 : static_cast<int>(enc_hidden.dim(2)); }
  int src_words() const;
  int tgt_words() const;

  friend bool operator==(const ActivationDump&, const ActivationDump&) = default;
};

Record to_record(const ActivationDump& dump);
ActivationDump dump_from_record(const Record& record);

struct ValidationIssue {
  enum class Severity { warning, error };
  Severity severity;
  std::string message;
};

/// Shape, subword-map and softmax checks. Rows whose sum is off by more than
/// `row_tolerance` yield warnings; structural problems yield errors.
std::vector<ValidationIssue> validate_dump(const ActivationDump& dump, std::optional<int> source_words = {},
                                           double row_tolerance = 1e-4);

/// Writes `dumps` to `dir/dumps.actd` and a `dir/manifest.json` listing the
/// byte offset of every record.
void write_dump_dir(const std::filesystem::path& dir, std::span<const ActivationDump> dumps);
void write_dump(const std::filesystem::path& file, std::span<const ActivationDump> dumps);

/// Accepts a single container file or a directory. Directories are read in
/// manifest order when manifest.json exists, else every *.actd file in name order.
std::vector<ActivationDump> read_dumps(const std::filesystem::path& path);

/// Single-consumer stream over one container file.
class DumpReader {
 public:
  explicit DumpReader(const std::filesystem::path& file);
  ~DumpReader();
  DumpReader(const DumpReader&) = delete;
  DumpReader& operator=(const DumpReader&) = delete;

  std::optional<ActivationDump> next();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Word-level attention. Attention into a word is the sum over its subtoken
// key columns; attention from a word is the mean over its subtoken query rows.

/// [rows x cols] slice of a [L][H][rows][cols] attention tensor; averaged over
/// heads unless `head` is given.
Eigen::MatrixXd layer_attention(const FloatTensor& attn, int layer, std::optional<int> head = {});

Eigen::MatrixXd word_attention(const Eigen::MatrixXd& subtoken_attn, std::span<const int> query_words,
                               int query_word_count, std::span<const int> key_words, int key_word_count);

std::vector<int> subtokens_of(std::span<const int> subword_to_word, int word);

}  // namespace idiolens
