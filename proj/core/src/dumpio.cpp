#include "idiolens/dumpio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "idiolens/io.hpp"

namespace idiolens {

using nlohmann::json;

const char* to_string(DumpErrc code) noexcept {
  switch (code) {
    case DumpErrc::bad_magic: return "bad magic";
    case DumpErrc::unsupported_version: return "unsupported version";
    case DumpErrc::bad_metadata: return "bad metadata";
    case DumpErrc::unsupported_dtype: return "unsupported dtype";
    case DumpErrc::dimension_overflow: return "dimension overflow";
    case DumpErrc::truncated: return "truncated payload";
  }
  return "dump error";
}

DumpError::DumpError(DumpErrc code, const std::string& what)
    : Error(ErrorKind::format, std::string(to_string(code)) + ": " + what), code_(code) {}

const AnyTensor* Record::find(std::string_view role) const {
  for (std::size_t i = 0; i < roles.size(); ++i)
    if (roles[i] == role) return &tensors[i];
  return nullptr;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
    throw DumpError(DumpErrc::truncated, fmt::format("stream ended inside {}", what));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <class T>
void put_payload(std::ostream& out, std::span<const T> data) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  } else {
    for (const T& v : data) put_le(out, v);
  }
}

template <class T>
std::vector<T> get_payload(std::istream& in, std::size_t count) {
  std::vector<T> data(count);
  const auto bytes = static_cast<std::streamsize>(count * sizeof(T));
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (in.gcount() != bytes)
    throw DumpError(DumpErrc::truncated,
                    fmt::format("tensor payload has {} of {} bytes", in.gcount(), bytes));
  if constexpr (std::endian::native == std::endian::big) {
    for (T& v : data) {
      unsigned char b[sizeof(T)];
      std::memcpy(b, &v, sizeof(T));
      std::reverse(b, b + sizeof(T));
      std::memcpy(&v, b, sizeof(T));
    }
  }
  return data;
}

void write_tensor(std::ostream& out, const AnyTensor& any) {
  std::visit(
      [&](const auto& t) {
        using T = typename std::decay_t<decltype(t)>::value_type;
        const std::uint8_t dtype = std::is_same_v<T, float> ? 0 : 1;
        if (t.rank() > kMaxTensorRank)
          throw DumpError(DumpErrc::dimension_overflow, fmt::format("rank {} exceeds {}", t.rank(), kMaxTensorRank));
        put_le<std::uint8_t>(out, dtype);
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.dims()) put_le<std::uint32_t>(out, d);
        put_payload<T>(out, t.data());
      },
      any);
}

AnyTensor read_tensor(std::istream& in) {
  const auto dtype = get_le<std::uint8_t>(in, "tensor header");
  const auto ndim = get_le<std::uint8_t>(in, "tensor header");
  if (dtype > 1) throw DumpError(DumpErrc::unsupported_dtype, fmt::format("dtype code {}", dtype));
  if (ndim > kMaxTensorRank)
    throw DumpError(DumpErrc::dimension_overflow, fmt::format("rank {} exceeds {}", ndim, kMaxTensorRank));
  std::vector<std::uint32_t> dims(ndim);
  std::uint64_t count = 1;
  for (auto& d : dims) {
    d = get_le<std::uint32_t>(in, "tensor dims");
    if (d != 0 && count > kMaxTensorElements / d)
      throw DumpError(DumpErrc::dimension_overflow, "element count exceeds 2^32");
    count *= d;
  }
  if (count > kMaxTensorElements) throw DumpError(DumpErrc::dimension_overflow, "element count exceeds 2^32");
  if (dtype == 0) return FloatTensor(std::move(dims), get_payload<float>(in, count));
  return DoubleTensor(std::move(dims), get_payload<double>(in, count));
}

}  // namespace

std::size_t write_record(std::ostream& out, const Record& record) {
  if (record.roles.size() != record.tensors.size())
    fail(ErrorKind::input, "record roles and tensors differ in count");
  json meta = record.meta;
  meta["tensors"] = record.roles;
  const std::string text = meta.dump();
  if (text.size() > kMaxMetadataBytes) throw DumpError(DumpErrc::bad_metadata, "metadata block too large");
  const auto start = out.tellp();
  out.write(kActdMagic, 4);
  put_le<std::uint16_t>(out, kActdVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : record.tensors) write_tensor(out, t);
  if (!out) fail(ErrorKind::io, "failed writing ACTD record");
  return static_cast<std::size_t>(out.tellp() - start);
}

std::optional<Record> read_record(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() == 0) return std::nullopt;
  if (in.gcount() != 4) throw DumpError(DumpErrc::truncated, "stream ended inside magic");
  if (std::memcmp(magic, kActdMagic, 4) != 0) throw DumpError(DumpErrc::bad_magic, "expected 'ACTD'");
  const auto version = get_le<std::uint16_t>(in, "version");
  if (version != kActdVersion) throw DumpError(DumpErrc::unsupported_version, fmt::format("version {}", version));
  const auto meta_len = get_le<std::uint32_t>(in, "metadata length");
  if (meta_len > kMaxMetadataBytes) throw DumpError(DumpErrc::bad_metadata, "metadata block too large");
  std::string text(meta_len, '\0');
  in.read(text.data(), meta_len);
  if (in.gcount() != static_cast<std::streamsize>(meta_len))
    throw DumpError(DumpErrc::truncated, "stream ended inside metadata");
  Record rec;
  try {
    rec.meta = json::parse(text);
  } catch (const json::exception& e) {
    throw DumpError(DumpErrc::bad_metadata, e.what());
  }
  if (!rec.meta.is_object()) throw DumpError(DumpErrc::bad_metadata, "metadata is not an object");
  if (auto it = rec.meta.find("tensors"); it != rec.meta.end()) {
    if (!it->is_array()) throw DumpError(DumpErrc::bad_metadata, "'tensors' is not an array");
    for (const auto& r : *it) {
      if (!r.is_string()) throw DumpError(DumpErrc::bad_metadata, "tensor role is not a string");
      rec.roles.push_back(r.get<std::string>());
    }
    rec.meta.erase(it);
  }
  for (std::size_t i = 0; i < rec.roles.size(); ++i) rec.tensors.push_back(read_tensor(in));
  return rec;
}

std::vector<Record> read_records(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + file.string());
  std::vector<Record> out;
  while (auto r = read_record(in)) out.push_back(std::move(*r));
  return out;
}

void write_records(const std::filesystem::path& file, std::span<const Record> records) {
  std::ostringstream buf(std::ios::binary);
  for (const auto& r : records) write_record(buf, r);
  write_file_atomic(file, buf.str());
}

std::string_view to_string(DumpVariant::Kind kind) noexcept {
  switch (kind) {
    case DumpVariant::Kind::normal: return "normal";
    case DumpVariant::Kind::masked: return "masked";
    case DumpVariant::Kind::projected: return "projected";
  }
  return "normal";
}

namespace {

int word_count(std::span<const int> map) {
  int mx = -1;
  for (int w : map) mx = std::max(mx, w);
  return mx + 1;
}

json variant_to_json(const DumpVariant& v) {
  json j{{"kind", std::string(to_string(v.kind))}};
  if (v.kind == DumpVariant::Kind::masked) {
    j["token"] = v.masked_token;
    j["layer"] = v.masked_layer;
  } else if (v.kind == DumpVariant::Kind::projected) {
    j["projector"] = v.projector_id;
    j["layers"] = v.projected_layers;
  }
  return j;
}

DumpVariant variant_from_json(const json& j) {
  DumpVariant v;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "normal") {
    v.kind = DumpVariant::Kind::normal;
  } else if (kind == "masked") {
    v.kind = DumpVariant::Kind::masked;
    v.masked_token = j.at("token").get<int>();
    v.masked_layer = j.at("layer").get<int>();
  } else if (kind == "projected") {
    v.kind = DumpVariant::Kind::projected;
    v.projector_id = j.value("projector", std::string());
    v.projected_layers = j.value("layers", std::vector<int>{});
  } else {
    throw DumpError(DumpErrc::bad_metadata, fmt::format("unknown variant '{}'", kind));
  }
  return v;
}

const FloatTensor& as_float(const AnyTensor& t, std::string_view role) {
  if (const auto* f = std::get_if<FloatTensor>(&t)) return *f;
  throw DumpError(DumpErrc::bad_metadata, fmt::format("tensor '{}' must be float32", role));
}

}  // namespace

int ActivationDump::src_words() const { return word_count(subword_to_word_src); }
int ActivationDump::tgt_words() const { return word_count(subword_to_word_tgt); }

Record to_record(const ActivationDump& d) {
  Record r;
  r.meta = json{{"kind", "activation_dump"},
                {"sentence_id", d.sentence_id},
                {"source_subtokens", d.source_subtokens},
                {"target_subtokens", d.target_subtokens},
                {"subword_to_word_src", d.subword_to_word_src},
                {"subword_to_word_tgt", d.subword_to_word_tgt},
                {"eos_index", d.eos_index},
                {"variant", variant_to_json(d.variant)}};
  auto add = [&](const char* role, const FloatTensor& t) {
    if (t.empty() && t.rank() == 0) return;
    r.roles.emplace_back(role);
    r.tensors.emplace_back(t);
  };
  add("enc_self_attn", d.enc_self_attn);
  add("cross_attn", d.cross_attn);
  add("enc_hidden", d.enc_hidden);
  return r;
}

ActivationDump dump_from_record(const Record& r) {
  ActivationDump d;
  try {
    if (r.meta.value("kind", std::string()) != "activation_dump")
      throw DumpError(DumpErrc::bad_metadata, "record is not an activation dump");
    d.sentence_id = r.meta.at("sentence_id").get<std::string>();
    d.source_subtokens = r.meta.at("source_subtokens").get<std::vector<std::string>>();
    d.target_subtokens = r.meta.value("target_subtokens", std::vector<std::string>{});
    d.subword_to_word_src = r.meta.at("subword_to_word_src").get<std::vector<int>>();
    d.subword_to_word_tgt = r.meta.value("subword_to_word_tgt", std::vector<int>{});
    d.eos_index = r.meta.value("eos_index", -1);
    d.variant = r.meta.contains("variant") ? variant_from_json(r.meta["variant"]) : DumpVariant{};
  } catch (const json::exception& e) {
    throw DumpError(DumpErrc::bad_metadata, e.what());
  }
  for (std::size_t i = 0; i < r.roles.size(); ++i) {
    const auto& role = r.roles[i];
    if (role == "enc_self_attn")
      d.enc_self_attn = as_float(r.tensors[i], role);
    else if (role == "cross_attn")
      d.cross_attn = as_float(r.tensors[i], role);
    else if (role == "enc_hidden")
      d.enc_hidden = as_float(r.tensors[i], role);
  }
  return d;
}

std::vector<ValidationIssue> validate_dump(const ActivationDump& d, std::optional<int> source_words,
                                           double row_tolerance) {
  std::vector<ValidationIssue> issues;
  auto error = [&](std::string msg) {
    issues.push_back({ValidationIssue::Severity::error, fmt::format("{}: {}", d.sentence_id, msg)});
  };
  auto warn = [&](std::string msg) {
    issues.push_back({ValidationIssue::Severity::warning, fmt::format("{}: {}", d.sentence_id, msg)});
  };
  const int S = d.src_len(), T = d.tgt_len();

  auto check_map = [&](const std::vector<int>& map, int subtokens, const char* name, std::optional<int> words) {
    if (static_cast<int>(map.size()) != subtokens) {
      error(fmt::format("{} has {} entries for {} subtokens", name, map.size(), subtokens));
      return;
    }
    int prev = -1;
    std::vector<bool> hit;
    for (int w : map) {
      if (w < -1) {
        error(fmt::format("{} holds negative word index {}", name, w));
        return;
      }
      if (w == -1) continue;
      if (w < prev) {
        error(fmt::format("{} is not monotone non-decreasing", name));
        return;
      }
      prev = w;
      if (static_cast<int>(hit.size()) <= w) hit.resize(w + 1, false);
      hit[w] = true;
    }
    if (std::find(hit.begin(), hit.end(), false) != hit.end())
      error(fmt::format("{} is not surjective onto its word indices", name));
    if (words && static_cast<int>(hit.size()) != *words)
      error(fmt::format("{} covers {} words, sentence has {}", name, hit.size(), *words));
  };
  check_map(d.subword_to_word_src, S, "subword_to_word_src", source_words);
  if (!d.subword_to_word_tgt.empty() || T > 0) check_map(d.subword_to_word_tgt, T, "subword_to_word_tgt", {});
  if (d.eos_index >= 0) {
    if (d.eos_index >= S)
      error(fmt::format("eos_index {} outside [0, {})", d.eos_index, S));
    else if (static_cast<int>(d.subword_to_word_src.size()) == S && d.subword_to_word_src[d.eos_index] != -1)
      error("eos subtoken is mapped to a word");
  }

  auto check_rows = [&](const FloatTensor& t, const char* name) {
    std::size_t bad = 0;
    double worst = 0;
    const std::size_t inner = t.dims().back();
    const std::size_t rows = inner ? t.size() / inner : 0;
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < inner; ++c) sum += t.data()[r * inner + c];
      const double dev = std::abs(sum - 1.0);
      if (!(dev <= row_tolerance)) {
        ++bad;
        worst = std::max(worst, std::isfinite(dev) ? dev : 1.0);
      }
    }
    if (bad) warn(fmt::format("{}: {} attention rows deviate from 1 (max |sum-1| = {:.6g})", name, bad, worst));
  };

  const int L = d.layers();
  if (d.enc_self_attn.rank() != 4 || d.enc_self_attn.dim(2) != static_cast<std::uint32_t>(S) ||
      d.enc_self_attn.dim(3) != static_cast<std::uint32_t>(S)) {
    error(fmt::format("enc_self_attn must have shape [L][H][{}][{}]", S, S));
  } else {
    check_rows(d.enc_self_attn, "enc_self_attn");
  }
  if (d.cross_attn.rank() != 0) {
    if (d.cross_attn.rank() != 4 || static_cast<int>(d.cross_attn.dim(0)) != L ||
        d.cross_attn.dim(2) != static_cast<std::uint32_t>(T) || d.cross_attn.dim(3) != static_cast<std::uint32_t>(S))
      error(fmt::format("cross_attn must have shape [{}][H][{}][{}]", L, T, S));
    else
      check_rows(d.cross_attn, "cross_attn");
  }
  if (d.enc_hidden.rank() != 0) {
    if (d.enc_hidden.rank() != 3 || static_cast<int>(d.enc_hidden.dim(0)) != L + 1 ||
        d.enc_hidden.dim(1) != static_cast<std::uint32_t>(S))
      error(fmt::format("enc_hidden must have shape [{}][{}][D]", L + 1, S));
  }
  if (d.variant.kind == DumpVariant::Kind::masked) {
    if (d.variant.masked_token < 0 || d.variant.masked_token >= S)
      error(fmt::format("masked token {} outside [0, {})", d.variant.masked_token, S));
    if (d.variant.masked_layer < 1 || d.variant.masked_layer > L)
      error(fmt::format("masked layer {} outside [1, {}]", d.variant.masked_layer, L));
  }
  return issues;
}

void write_dump(const std::filesystem::path& file, std::span<const ActivationDump> dumps) {
  std::vector<Record> records;
  records.reserve(dumps.size());
  for (const auto& d : dumps) records.push_back(to_record(d));
  write_records(file, records);
}

void write_dump_dir(const std::filesystem::path& dir, std::span<const ActivationDump> dumps) {
  const std::string file = "dumps.actd";
  std::ostringstream buf(std::ios::binary);
  json entries = json::array();
  for (const auto& d : dumps) {
    const auto offset = static_cast<std::uint64_t>(buf.tellp());
    write_record(buf, to_record(d));
    entries.push_back({{"sentence_id", d.sentence_id},
                       {"file", file},
                       {"offset", offset},
                       {"variant", variant_to_json(d.variant)}});
  }
  write_file_atomic(dir / file, buf.str());
  const json manifest{{"format", "ACTD"}, {"version", kActdVersion}, {"records", entries}};
  write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::vector<ActivationDump> read_dumps(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<ActivationDump> out;
  if (!fs::is_directory(path)) {
    for (const auto& r : read_records(path)) out.push_back(dump_from_record(r));
    return out;
  }
  const fs::path manifest_path = path / "manifest.json";
  if (fs::exists(manifest_path)) {
    json manifest;
    try {
      manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, fmt::format("{}: {}", manifest_path.string(), e.what()));
    }
    std::map<std::string, std::ifstream> files;
    for (const auto& e : manifest.at("records")) {
      const std::string file = e.at("file").get<std::string>();
      auto [it, inserted] = files.try_emplace(file);
      if (inserted) {
        it->second.open(path / file, std::ios::binary);
        if (!it->second) fail(ErrorKind::io, "cannot open " + (path / file).string());
      }
      it->second.clear();
      it->second.seekg(static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
      auto rec = read_record(it->second);
      if (!rec) throw DumpError(DumpErrc::truncated, fmt::format("manifest offset past end of {}", file));
      out.push_back(dump_from_record(*rec));
      if (out.back().sentence_id != e.at("sentence_id").get<std::string>())
        fail(ErrorKind::consistency, fmt::format("manifest entry for '{}' points at '{}'",
                                                 e.at("sentence_id").get<std::string>(), out.back().sentence_id));
    }
    return out;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path))
    if (entry.is_regular_file() && entry.path().extension() == ".actd") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    for (const auto& r : read_records(f)) out.push_back(dump_from_record(r));
  return out;
}

struct DumpReader::Impl {
  std::ifstream in;
};

DumpReader::DumpReader(const std::filesystem::path& file) : impl_(std::make_unique<Impl>()) {
  impl_->in.open(file, std::ios::binary);
  if (!impl_->in) fail(ErrorKind::io, "cannot open " + file.string());
}

DumpReader::~DumpReader() = default;

std::optional<ActivationDump> DumpReader::next() {
  auto rec = read_record(impl_->in);
  if (!rec) return std::nullopt;
  return dump_from_record(*rec);
}

Eigen::MatrixXd layer_attention(const FloatTensor& attn, int layer, std::optional<int> head) {
  if (attn.rank() != 4) fail(ErrorKind::input, "attention tensor must have rank 4");
  const int L = static_cast<int>(attn.dim(0)), H = static_cast<int>(attn.dim(1));
  const int R = static_cast<int>(attn.dim(2)), C = static_cast<int>(attn.dim(3));
  if (layer < 0 || layer >= L) fail(ErrorKind::input, fmt::format("layer {} outside [0, {})", layer, L));
  if (head && (*head < 0 || *head >= H)) fail(ErrorKind::input, fmt::format("head {} outside [0, {})", *head, H));
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(R, C);
  const int h0 = head ? *head : 0, h1 = head ? *head + 1 : H;
  for (int h = h0; h < h1; ++h)
    for (int r = 0; r < R; ++r) {
      const auto row = attn.row(layer, h, r);
      for (int c = 0; c < C; ++c) m(r, c) += row[c];
    }
  return m / static_cast<double>(h1 - h0);
}

Eigen::MatrixXd word_attention(const Eigen::MatrixXd& sub, std::span<const int> query_words, int query_word_count,
                               std::span<const int> key_words, int key_word_count) {
  if (static_cast<Eigen::Index>(query_words.size()) != sub.rows() ||
      static_cast<Eigen::Index>(key_words.size()) != sub.cols())
    fail(ErrorKind::input, "subword maps do not match the attention matrix");
  // Sum key columns into words first.
  Eigen::MatrixXd into = Eigen::MatrixXd::Zero(sub.rows(), key_word_count);
  for (Eigen::Index k = 0; k < sub.cols(); ++k) {
    const int w = key_words[k];
    if (w >= 0 && w < key_word_count) into.col(w) += sub.col(k);
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(query_word_count, key_word_count);
  std::vector<int> count(query_word_count, 0);
  for (Eigen::Index q = 0; q < sub.rows(); ++q) {
    const int w = query_words[q];
    if (w < 0 || w >= query_word_count) continue;
    out.row(w) += into.row(q);
    ++count[w];
  }
  for (int w = 0; w < query_word_count; ++w) {
    if (count[w] > 0)
      out.row(w) /= count[w];
    else
      out.row(w).setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

std::vector<int> subtokens_of(std::span<const int> map, int word) {
  std::vector<int> out;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map[i] == word) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace idiolens
