#include "idiolens/repr.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "idiolens/io.hpp"
#include "matrix_record.hpp"

namespace idiolens {

namespace {

Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& cov, const char* side) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) fail(ErrorKind::numerical, fmt::format("eigendecomposition of {} failed", side));
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double top = vals.maxCoeff();
  if (!(top > 0) || vals.minCoeff() <= top * 1e-14)
    fail(ErrorKind::numerical, fmt::format("covariance of {} is singular; increase the ridge", side));
  return eig.eigenvectors() * vals.cwiseInverse().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

double row_correlation(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
  const Eigen::RowVectorXd dx = x.array() - x.mean();
  const Eigen::RowVectorXd dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm(), syy = dy.squaredNorm();
  // Relative guard so rounding noise on a constant coordinate reads as zero variance.
  const double scale = std::max(x.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff());
  const double floor = 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(x.size());
  if (sxx <= floor || syy <= floor) return 0.0;
  return std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

CcaProjection fit_cca(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double ridge) {
  if (a.cols() != b.cols()) fail(ErrorKind::input, "CCA views have different numbers of observations");
  if (!a.allFinite() || !b.allFinite()) fail(ErrorKind::input, "CCA input contains non-finite values");
  if (ridge < 0 || !std::isfinite(ridge)) fail(ErrorKind::input, "ridge must be finite and non-negative");
  const Eigen::Index n = a.cols(), da = a.rows(), db = b.rows();
  if (da == 0 || db == 0) fail(ErrorKind::input, "CCA views must have at least one dimension");
  if (n <= std::max(da, db))
    fail(ErrorKind::numerical, fmt::format("CCA needs more than {} observations, got {}", std::max(da, db), n));

  CcaProjection p;
  p.ridge = ridge;
  p.mean_a = a.rowwise().mean();
  p.mean_b = b.rowwise().mean();
  const Eigen::MatrixXd ac = a.colwise() - p.mean_a;
  const Eigen::MatrixXd bc = b.colwise() - p.mean_b;
  const double denom = static_cast<double>(n - 1);
  Eigen::MatrixXd saa = ac * ac.transpose() / denom;
  Eigen::MatrixXd sbb = bc * bc.transpose() / denom;
  const Eigen::MatrixXd sab = ac * bc.transpose() / denom;
  saa.diagonal().array() += ridge * saa.trace() / static_cast<double>(da);
  sbb.diagonal().array() += ridge * sbb.trace() / static_cast<double>(db);

  const Eigen::MatrixXd ia = inverse_sqrt(saa, "view A");
  const Eigen::MatrixXd ib = inverse_sqrt(sbb, "view B");
  const Eigen::MatrixXd t = ia * sab * ib;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) fail(ErrorKind::numerical, "SVD of the whitened cross-covariance failed");

  const Eigen::Index r = std::min(da, db);
  p.W = svd.matrixU().leftCols(r).transpose() * ia;
  p.V = svd.matrixV().leftCols(r).transpose() * ib;
  p.correlations = svd.singularValues().head(r).cwiseMax(0.0).cwiseMin(1.0);

  // Deterministic sign: the largest-magnitude entry of each W row is positive.
  for (Eigen::Index i = 0; i < r; ++i) {
    Eigen::Index arg = 0;
    p.W.row(i).cwiseAbs().maxCoeff(&arg);
    if (p.W(i, arg) < 0) {
      p.W.row(i) *= -1;
      p.V.row(i) *= -1;
    }
  }
  return p;
}

double cca_similarity(const CcaProjection& p, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != p.W.cols() || b.rows() != p.V.cols())
    fail(ErrorKind::input, fmt::format("projection expects {}/{} dimensions, got {}/{}", p.W.cols(), p.V.cols(),
                                       a.rows(), b.rows()));
  if (a.cols() != b.cols()) fail(ErrorKind::input, "CCA views have different numbers of observations");
  if (a.cols() < 2) fail(ErrorKind::input, "CCA similarity needs at least two observations");
  const Eigen::MatrixXd pa = p.W * (a.colwise() - p.mean_a);
  const Eigen::MatrixXd pb = p.V * (b.colwise() - p.mean_b);
  double total = 0;
  for (Eigen::Index i = 0; i < pa.rows(); ++i) total += row_correlation(pa.row(i), pb.row(i));
  return total / static_cast<double>(pa.rows());
}

using detail::need;
using detail::to_matrix;
using detail::to_tensor;
using detail::to_vector;

Record to_record(const CcaProjection& p) {
  Record r;
  r.meta = {{"kind", "cca_projection"}, {"ridge", p.ridge}};
  r.roles = {"W", "V", "mean_a", "mean_b", "correlations"};
  r.tensors = {to_tensor(p.W), to_tensor(p.V), to_tensor(p.mean_a), to_tensor(p.mean_b), to_tensor(p.correlations)};
  return r;
}

CcaProjection cca_from_record(const Record& r) {
  if (r.meta.value("kind", std::string()) != "cca_projection")
    throw DumpError(DumpErrc::bad_metadata, "record is not a CCA projection");
  CcaProjection p;
  p.ridge = r.meta.value("ridge", kDefaultRidge);
  p.W = to_matrix(need(r, "W", 2));
  p.V = to_matrix(need(r, "V", 2));
  p.mean_a = to_vector(need(r, "mean_a", 1));
  p.mean_b = to_vector(need(r, "mean_b", 1));
  p.correlations = to_vector(need(r, "correlations", 1));
  if (p.W.cols() != p.mean_a.size() || p.V.cols() != p.mean_b.size() || p.W.rows() != p.correlations.size() ||
      p.V.rows() != p.correlations.size())
    throw DumpError(DumpErrc::bad_metadata, "CCA projection tensors have inconsistent shapes");
  return p;
}

std::string_view to_string(TokenClass c) noexcept {
  switch (c) {
    case TokenClass::pie_noun: return "pie_noun";
    case TokenClass::non_pie_noun: return "non_pie_noun";
    case TokenClass::pie_token: return "pie_token";
    case TokenClass::context_token: return "context_token";
  }
  return "pie_noun";
}

TokenClass parse_token_class(std::string_view text) {
  for (TokenClass c : {TokenClass::pie_noun, TokenClass::non_pie_noun, TokenClass::pie_token, TokenClass::context_token})
    if (text == to_string(c)) return c;
  fail(ErrorKind::input, fmt::format("unknown token class '{}'", text));
}

std::vector<int> select_subtokens(const ActivationDump& d, const PieSentence& s, TokenClass c, int window) {
  std::vector<int> words;
  switch (c) {
    case TokenClass::pie_noun: words = s.keyword_indices; break;
    case TokenClass::non_pie_noun: words = s.context_noun_indices; break;
    case TokenClass::pie_token: words = s.pie_word_indices; break;
    case TokenClass::context_token: {
      ProfileOptions opt;
      opt.context_window = window;
      opt.ctx_all_tokens = true;
      words = context_words(s, opt);
      break;
    }
  }
  std::sort(words.begin(), words.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < d.subword_to_word_src.size(); ++i)
    if (std::binary_search(words.begin(), words.end(), d.subword_to_word_src[i])) out.push_back(static_cast<int>(i));
  return out;
}

Eigen::MatrixXd gather_hidden(const ActivationDump& d, int layer, const std::vector<int>& subtokens) {
  if (d.enc_hidden.rank() != 3) fail(ErrorKind::consistency, fmt::format("dump '{}' has no hidden states", d.sentence_id));
  if (layer < 0 || layer >= static_cast<int>(d.enc_hidden.dim(0)))
    fail(ErrorKind::input, fmt::format("hidden layer {} outside [0, {})", layer, d.enc_hidden.dim(0)));
  const int dim = d.hidden_dim();
  Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(subtokens.size()));
  for (std::size_t j = 0; j < subtokens.size(); ++j) {
    const auto row = d.enc_hidden.row(layer, subtokens[j]);
    for (int k = 0; k < dim; ++k) out(k, static_cast<Eigen::Index>(j)) = row[k];
  }
  return out;
}

void save_bank(const std::filesystem::path& file, const ProjectionBank& bank) {
  std::vector<Record> records;
  for (const auto& [layer, proj] : bank.by_layer) {
    Record r = to_record(proj);
    r.meta["role"] = bank.role == BankRole::layer_pair ? "layer_pair" : "mask";
    r.meta["layer"] = layer;
    records.push_back(std::move(r));
  }
  write_records(file, records);
}

ProjectionBank load_bank(const std::filesystem::path& file) {
  ProjectionBank bank;
  bool first = true;
  for (const auto& r : read_records(file)) {
    const std::string role = r.meta.value("role", std::string());
    BankRole br;
    if (role == "layer_pair")
      br = BankRole::layer_pair;
    else if (role == "mask")
      br = BankRole::mask;
    else
      throw DumpError(DumpErrc::bad_metadata, fmt::format("unknown projection role '{}'", role));
    if (!first && br != bank.role) fail(ErrorKind::consistency, "projection bank mixes roles");
    bank.role = br;
    first = false;
    if (!r.meta.contains("layer") || !r.meta["layer"].is_number_integer())
      throw DumpError(DumpErrc::bad_metadata, "projection record lacks an integer 'layer'");
    bank.by_layer[r.meta["layer"].get<int>()] = cca_from_record(r);
  }
  return bank;
}

namespace {

std::vector<int> word_subtokens(const ActivationDump& d) {
  std::vector<int> out;
  for (std::size_t i = 0; i < d.subword_to_word_src.size(); ++i)
    if (d.subword_to_word_src[i] >= 0) out.push_back(static_cast<int>(i));
  return out;
}

/// Keeps at most `limit` columns, chosen by a seeded shuffle, in original order.
std::vector<std::size_t> subsample(std::size_t n, std::size_t limit, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n <= limit) return idx;
  std::mt19937_64 rng(seed);
  deterministic_shuffle(idx, rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

Eigen::MatrixXd hstack(const std::vector<Eigen::MatrixXd>& blocks, Eigen::Index rows) {
  Eigen::Index cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

}  // namespace

ProjectionBank fit_layer_bank(const std::vector<ActivationDump>& pool, const PoolOptions& opt) {
  if (pool.empty()) fail(ErrorKind::empty_set, "empty CCA pool");
  const int hidden_layers = static_cast<int>(pool.front().enc_hidden.rank() == 3 ? pool.front().enc_hidden.dim(0) : 0);
  if (hidden_layers < 2) fail(ErrorKind::consistency, "pool dumps need at least two hidden-state layers");
  const Eigen::Index dim = pool.front().hidden_dim();
  ProjectionBank bank;
  bank.role = BankRole::layer_pair;
  std::vector<std::vector<Eigen::MatrixXd>> blocks(hidden_layers);
  for (const auto& d : pool) {
    if (d.enc_hidden.rank() != 3 || static_cast<int>(d.enc_hidden.dim(0)) != hidden_layers || d.hidden_dim() != dim)
      fail(ErrorKind::consistency, fmt::format("pool dump '{}' has a different hidden-state shape", d.sentence_id));
    const auto toks = word_subtokens(d);
    for (int l = 0; l < hidden_layers; ++l) blocks[l].push_back(gather_hidden(d, l, toks));
  }
  std::vector<Eigen::MatrixXd> all(hidden_layers);
  for (int l = 0; l < hidden_layers; ++l) all[l] = hstack(blocks[l], dim);
  const auto cols = subsample(static_cast<std::size_t>(all[0].cols()), opt.pool_size, opt.seed);
  for (int l = 0; l + 1 < hidden_layers; ++l)
    bank.by_layer[l] = fit_cca(take_columns(all[l], cols), take_columns(all[l + 1], cols), opt.ridge);
  return bank;
}

ProjectionBank fit_mask_bank(const std::vector<ActivationDump>& normal, const std::vector<ActivationDump>& masked,
                             const PoolOptions& opt) {
  const DumpIndex ni = index_dumps(normal);
  std::map<int, std::vector<Eigen::MatrixXd>> a_blocks, b_blocks;
  Eigen::Index dim = -1;
  for (const auto& m : masked) {
    if (m.variant.kind != DumpVariant::Kind::masked)
      fail(ErrorKind::consistency, fmt::format("dump '{}' is not a masked variant", m.sentence_id));
    auto it = ni.find(m.sentence_id);
    if (it == ni.end()) fail(ErrorKind::consistency, fmt::format("no normal dump for '{}'", m.sentence_id));
    const ActivationDump& n = *it->second;
    if (n.variant.kind != DumpVariant::Kind::normal)
      fail(ErrorKind::consistency, fmt::format("dump '{}' is not a normal variant", n.sentence_id));
    if (dim < 0) dim = n.hidden_dim();
    if (n.hidden_dim() != dim || m.hidden_dim() != dim || n.src_len() != m.src_len())
      fail(ErrorKind::consistency, fmt::format("normal and masked dumps of '{}' differ in shape", m.sentence_id));
    std::vector<int> toks;
    for (int t : word_subtokens(n))
      if (t != m.variant.masked_token) toks.push_back(t);
    const int layer = m.variant.masked_layer;
    a_blocks[layer].push_back(gather_hidden(n, layer, toks));
    b_blocks[layer].push_back(gather_hidden(m, layer, toks));
  }
  if (a_blocks.empty()) fail(ErrorKind::empty_set, "no masked dumps to fit on");
  ProjectionBank bank;
  bank.role = BankRole::mask;
  for (auto& [layer, blocks] : a_blocks) {
    const Eigen::MatrixXd a = hstack(blocks, dim);
    const Eigen::MatrixXd b = hstack(b_blocks[layer], dim);
    const auto cols = subsample(static_cast<std::size_t>(a.cols()), opt.pool_size, opt.seed);
    bank.by_layer[layer] = fit_cca(take_columns(a, cols), take_columns(b, cols), opt.ridge);
  }
  return bank;
}

namespace {

double similarity_of(const ProjectionBank& bank, int key, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const SimilarityOptions& opt) {
  if (opt.refit) {
    const CcaProjection p = fit_cca(a, b, opt.ridge);
    return cca_similarity(p, a, b);
  }
  auto it = bank.by_layer.find(key);
  if (it == bank.by_layer.end()) fail(ErrorKind::missing_input, fmt::format("projection bank has no entry for layer {}", key));
  return cca_similarity(it->second, a, b);
}

}  // namespace

std::vector<LayerSimilarity> layer_similarity(const DumpIndex& dumps, const std::vector<PieSentence>& sentences,
                                              TokenClass token_class, const ProjectionBank& bank,
                                              const SimilarityOptions& opt, std::vector<std::string>* warnings) {
  if (!opt.refit && bank.role != BankRole::layer_pair)
    fail(ErrorKind::consistency, "layer similarity needs a layer_pair projection bank");
  int hidden_layers = -1;
  Eigen::Index dim = 0;
  std::vector<std::vector<Eigen::MatrixXd>> blocks;
  for (const auto& s : sentences) {
    auto it = dumps.find(s.id);
    if (it == dumps.end()) fail(ErrorKind::consistency, fmt::format("no dump for sentence '{}'", s.id));
    const ActivationDump& d = *it->second;
    if (d.enc_hidden.rank() != 3) fail(ErrorKind::consistency, fmt::format("dump '{}' has no hidden states", s.id));
    const int hl = static_cast<int>(d.enc_hidden.dim(0));
    if (hidden_layers < 0) {
      hidden_layers = hl;
      dim = d.hidden_dim();
      blocks.resize(hl);
    } else if (hl != hidden_layers || d.hidden_dim() != dim) {
      fail(ErrorKind::consistency, fmt::format("dump '{}' has a different hidden-state shape", s.id));
    }
    const auto toks = select_subtokens(d, s, token_class);
    if (toks.empty()) continue;
    for (int l = 0; l < hl; ++l) blocks[l].push_back(gather_hidden(d, l, toks));
  }
  std::vector<LayerSimilarity> out;
  if (hidden_layers < 2) return out;
  const Eigen::MatrixXd first = hstack(blocks[0], dim);
  const std::size_t n = static_cast<std::size_t>(first.cols());
  if (n < std::max<std::size_t>(opt.min_tokens, 2)) {
    if (warnings)
      warnings->push_back(fmt::format("{}: {} tokens below minimum {}, omitted", to_string(token_class), n,
                                      opt.min_tokens));
    return out;
  }
  Eigen::MatrixXd prev = first;
  for (int l = 0; l + 1 < hidden_layers; ++l) {
    Eigen::MatrixXd next = hstack(blocks[l + 1], dim);
    out.push_back({l, similarity_of(bank, l, prev, next, opt), n});
    prev = std::move(next);
  }
  return out;
}

std::vector<LayerSimilarity> mask_influence(const DumpIndex& normal, const std::vector<ActivationDump>& masked,
                                            const CorpusSet& corpus, TokenClass affected, const ProjectionBank& bank,
                                            const SimilarityOptions& opt, std::vector<std::string>* warnings) {
  if (!opt.refit && bank.role != BankRole::mask)
    fail(ErrorKind::consistency, "mask influence needs a mask projection bank");
  std::map<int, std::vector<Eigen::MatrixXd>> a_blocks, b_blocks;
  Eigen::Index dim = -1;
  for (const auto& m : masked) {
    if (m.variant.kind != DumpVariant::Kind::masked)
      fail(ErrorKind::consistency, fmt::format("dump '{}' is not a masked variant", m.sentence_id));
    const PieSentence* s = corpus.find(m.sentence_id);
    if (!s) continue;
    auto it = normal.find(m.sentence_id);
    if (it == normal.end()) fail(ErrorKind::consistency, fmt::format("no normal dump for '{}'", m.sentence_id));
    const ActivationDump& n = *it->second;
    if (n.variant.kind != DumpVariant::Kind::normal)
      fail(ErrorKind::consistency, fmt::format("dump '{}' is not a normal variant", n.sentence_id));
    if (n.source_subtokens != m.source_subtokens || n.subword_to_word_src != m.subword_to_word_src)
      fail(ErrorKind::consistency, fmt::format("normal and masked dumps of '{}' tokenize differently", m.sentence_id));
    const int mt = m.variant.masked_token;
    if (mt < 0 || mt >= m.src_len())
      fail(ErrorKind::consistency, fmt::format("dump '{}' masks token {} outside the sentence", m.sentence_id, mt));
    if (opt.masked_class) {
      const auto allowed = select_subtokens(n, *s, *opt.masked_class);
      if (!std::binary_search(allowed.begin(), allowed.end(), mt))
        fail(ErrorKind::consistency, fmt::format("dump '{}' masks token {}, which is not a {}", m.sentence_id, mt,
                                                 to_string(*opt.masked_class)));
    }
    std::vector<int> toks;
    for (int t : select_subtokens(n, *s, affected))
      if (t != mt) toks.push_back(t);
    if (toks.empty()) continue;
    if (dim < 0) dim = n.hidden_dim();
    if (n.hidden_dim() != dim || m.hidden_dim() != dim)
      fail(ErrorKind::consistency, fmt::format("dump '{}' has a different hidden size", m.sentence_id));
    const int layer = m.variant.masked_layer;
    a_blocks[layer].push_back(gather_hidden(n, layer, toks));
    b_blocks[layer].push_back(gather_hidden(m, layer, toks));
  }
  if (a_blocks.empty()) fail(ErrorKind::empty_set, fmt::format("no affected {} tokens in the masked dumps", to_string(affected)));
  std::vector<LayerSimilarity> out;
  for (auto& [layer, blocks] : a_blocks) {
    const Eigen::MatrixXd a = hstack(blocks, dim);
    const Eigen::MatrixXd b = hstack(b_blocks[layer], dim);
    const std::size_t n = static_cast<std::size_t>(a.cols());
    if (n < std::max<std::size_t>(opt.min_tokens, 2)) {
      if (warnings)
        warnings->push_back(fmt::format("masked layer {}: {} affected tokens below minimum {}, omitted", layer, n,
                                        opt.min_tokens));
      continue;
    }
    out.push_back({layer, similarity_of(bank, layer, a, b, opt), n});
  }
  return out;
}

}  // namespace idiolens
