#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "idiolens/probe.hpp"
#include "matrix_record.hpp"

namespace idiolens {

namespace {

Eigen::MatrixXd stack_rows(const std::vector<Eigen::VectorXd>& rows, Eigen::Index dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

}  // namespace

NullspaceProjector inlp_train(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::MatrixXd* x_dev,
                              const std::vector<int>* y_dev, const InlpOptions& opt) {
  if (opt.iterations < 0) fail(ErrorKind::input, "INLP iteration count must be non-negative");
  if ((x_dev == nullptr) != (y_dev == nullptr)) fail(ErrorKind::input, "development features and labels go together");
  if (x_dev && x_dev->cols() != x.cols())
    fail(ErrorKind::input, fmt::format("development data has {} features, training data {}", x_dev->cols(), x.cols()));
  if (x_dev && (static_cast<std::size_t>(x_dev->rows()) != y_dev->size() || y_dev->empty()))
    fail(ErrorKind::input, "development features and labels differ in length or are empty");
  const Eigen::Index d = x.cols();

  NullspaceProjector proj;
  proj.P = Eigen::MatrixXd::Identity(d, d);
  std::vector<Eigen::VectorXd> basis;
  for (int it = 0; it < opt.iterations && static_cast<Eigen::Index>(basis.size()) < d; ++it) {
    const Probe probe = train_probe(x * proj.P, y, opt.probe);
    proj.iterations = it + 1;
    if (x_dev) proj.dev_accuracy.push_back(accuracy(probe.predict(*x_dev * proj.P), *y_dev));
    // Two Gram-Schmidt passes keep the basis orthonormal to rounding.
    Eigen::VectorXd v = probe.weights;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) v -= q.dot(v) * q;
    if (v.norm() < opt.drop_tolerance) break;  // the probe found nothing new; later ones would repeat it
    basis.push_back(v.normalized());
    proj.probe_weights.push_back(probe.weights);
    const Eigen::MatrixXd q = stack_rows(basis, d);
    proj.P = Eigen::MatrixXd::Identity(d, d) - q.transpose() * q;
  }
  proj.directions = stack_rows(basis, d);
  if (x_dev) {
    const Probe last = train_probe(x * proj.P, y, opt.probe);
    proj.final_dev_accuracy = accuracy(last.predict(*x_dev * proj.P), *y_dev);
  }
  return proj;
}

Eigen::MatrixXd apply_projection(const NullspaceProjector& proj, const Eigen::MatrixXd& h) {
  if (h.rows() != proj.P.cols())
    fail(ErrorKind::input, fmt::format("projector is {}-dimensional, vectors have {} rows", proj.P.cols(), h.rows()));
  return proj.P * h;
}

Record to_record(const NullspaceProjector& p) {
  Record r;
  r.meta = {{"kind", "nullspace_projector"},
            {"iterations", p.iterations},
            {"removed", p.removed()},
            {"dev_accuracy", p.dev_accuracy}};
  if (p.final_dev_accuracy) r.meta["final_dev_accuracy"] = *p.final_dev_accuracy;
  r.roles = {"P", "directions", "probe_weights"};
  r.tensors = {detail::to_tensor(p.P), detail::to_tensor(p.directions),
               detail::to_tensor(stack_rows(p.probe_weights, p.P.cols()))};
  return r;
}

NullspaceProjector projector_from_record(const Record& r) {
  if (r.meta.value("kind", std::string()) != "nullspace_projector")
    throw DumpError(DumpErrc::bad_metadata, "record is not a nullspace projector");
  NullspaceProjector p;
  p.P = detail::to_matrix(detail::need(r, "P", 2));
  p.directions = detail::to_matrix(detail::need(r, "directions", 2));
  const Eigen::MatrixXd w = detail::to_matrix(detail::need(r, "probe_weights", 2));
  if (p.P.rows() != p.P.cols() || p.directions.cols() != p.P.cols() || w.cols() != p.P.cols())
    throw DumpError(DumpErrc::bad_metadata, "projector tensors have inconsistent shapes");
  for (Eigen::Index i = 0; i < w.rows(); ++i) p.probe_weights.push_back(w.row(i).transpose());
  try {
    p.iterations = r.meta.value("iterations", 0);
    p.dev_accuracy = r.meta.value("dev_accuracy", std::vector<double>{});
    if (r.meta.contains("final_dev_accuracy")) p.final_dev_accuracy = r.meta["final_dev_accuracy"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DumpError(DumpErrc::bad_metadata, fmt::format("projector metadata: {}", e.what()));
  }
  return p;
}

void save_projectors(const std::filesystem::path& file, const std::map<int, NullspaceProjector>& by_layer,
                     const nlohmann::json& extra) {
  std::vector<Record> records;
  for (const auto& [layer, p] : by_layer) {
    Record r = to_record(p);
    for (const auto& [k, v] : extra.items())
      if (!r.meta.contains(k)) r.meta[k] = v;
    r.meta["layer"] = layer;
    records.push_back(std::move(r));
  }
  write_records(file, records);
}

std::map<int, NullspaceProjector> load_projectors(const std::filesystem::path& file) {
  std::map<int, NullspaceProjector> out;
  for (const auto& r : read_records(file)) {
    if (!r.meta.contains("layer") || !r.meta["layer"].is_number_integer())
      throw DumpError(DumpErrc::bad_metadata, "projector record lacks an integer 'layer'");
    const int layer = r.meta["layer"].get<int>();
    if (out.count(layer)) fail(ErrorKind::consistency, fmt::format("two projectors for layer {}", layer));
    out[layer] = projector_from_record(r);
  }
  return out;
}

std::vector<FoldRoles> amnesic_fold_plan(int folds, int estimation_fold) {
  if (folds < 3) fail(ErrorKind::input, "amnesic probing needs at least three folds");
  if (estimation_fold < 0 || estimation_fold >= folds)
    fail(ErrorKind::input, fmt::format("estimation fold {} outside [0, {})", estimation_fold, folds));
  std::vector<FoldRoles> plan;
  auto round = [&](int success) {
    FoldRoles r;
    r.success = success;
    r.dev = (success + 1) % folds;
    for (int f = 0; f < folds; ++f)
      if (f != r.success && f != r.dev) r.train.push_back(f);
    plan.push_back(std::move(r));
  };
  for (int f = 0; f < folds; ++f)
    if (f != estimation_fold) round(f);
  round(estimation_fold);
  return plan;
}

}  // namespace idiolens
