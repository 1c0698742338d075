#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "adascan/error.hpp"
#include "adascan/model.hpp"

namespace adascan {

namespace detail {

inline nlohmann::json matrix_to_json(const Tensor& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Tensor& v) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Tensor matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                               const std::string& name) {
  if (!j.is_array() || j.size() != rows)
    throw IngestionError("model file: " + name + " must have " + std::to_string(rows) + " rows");
  Tensor m({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw IngestionError("model file: " + name + " row " + std::to_string(i) + " must have " +
                           std::to_string(cols) + " values");
    for (std::size_t k = 0; k < cols; ++k) m.at(i, k) = j[i][k].get<double>();
  }
  return m;
}

inline Tensor vector_from_json(const nlohmann::json& j, std::size_t n, const std::string& name) {
  if (!j.is_array() || j.size() != n)
    throw IngestionError("model file: " + name + " must have " + std::to_string(n) + " values");
  Tensor v({n});
  for (std::size_t i = 0; i < n; ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json hyper_to_json(const HyperParams& h) {
  nlohmann::json j;
  j["lambda"] = h.lambda;
  j["lr_pool"] = h.lr_pool;
  j["lr_classifier"] = h.lr_classifier;
  j["clip_norm"] = h.clip_norm;
  j["epochs"] = h.epochs;
  j["batch_size"] = h.batch_size;
  j["dropout_p"] = h.dropout_p;
  j["reg_kind"] = to_string(h.reg_kind);
  j["hidden"] = {h.hidden1, h.hidden2};
  j["seed"] = h.seed;
  return j;
}

inline HyperParams hyper_from_json(const nlohmann::json& j) {
  HyperParams h;
  h.lambda = j.at("lambda").get<double>();
  h.lr_pool = j.at("lr_pool").get<double>();
  h.lr_classifier = j.at("lr_classifier").get<double>();
  h.clip_norm = j.at("clip_norm").get<double>();
  h.epochs = j.at("epochs").get<int>();
  h.batch_size = j.at("batch_size").get<int>();
  h.dropout_p = j.at("dropout_p").get<double>();
  const auto reg = reg_kind_from_string(j.at("reg_kind").get<std::string>());
  if (!reg) throw IngestionError("model file: unknown reg_kind");
  h.reg_kind = *reg;
  const auto& hidden = j.at("hidden");
  if (!hidden.is_array() || hidden.size() != 2)
    throw IngestionError("model file: hyper.hidden must be [h1, h2]");
  h.hidden1 = hidden[0].get<std::size_t>();
  h.hidden2 = hidden[1].get<std::size_t>();
  h.seed = j.at("seed").get<std::uint64_t>();
  return h;
}

inline nlohmann::json model_to_json(const ModelParams& p) {
  p.validate();
  const Dims d = p.dims();
  nlohmann::json j;
  j["version"] = p.version;
  j["dims"] = {{"D", d.feat_dim}, {"C", d.num_classes}, {"h1", d.h1}, {"h2", d.h2}};
  j["hyper"] = hyper_to_json(p.hyper);
  j["weights"]["imp"]["W1"] = detail::matrix_to_json(p.imp.w1);
  j["weights"]["imp"]["b1"] = detail::vector_to_json(p.imp.b1);
  j["weights"]["imp"]["W2"] = detail::matrix_to_json(p.imp.w2);
  j["weights"]["imp"]["b2"] = detail::vector_to_json(p.imp.b2);
  j["weights"]["imp"]["W3"] = detail::matrix_to_json(p.imp.w3);
  j["weights"]["imp"]["b3"] = detail::vector_to_json(p.imp.b3);
  j["weights"]["classifier"]["W"] = detail::matrix_to_json(p.classifier.w);
  j["weights"]["classifier"]["b"] = detail::vector_to_json(p.classifier.b);
  return j;
}

inline ModelParams model_from_json(const nlohmann::json& j) {
  try {
    ModelParams p;
    p.version = j.at("version").get<std::string>();
    const auto& dims = j.at("dims");
    const auto d = dims.at("D").get<std::size_t>();
    const auto c = dims.at("C").get<std::size_t>();
    const auto h1 = dims.at("h1").get<std::size_t>();
    const auto h2 = dims.at("h2").get<std::size_t>();
    p.hyper = hyper_from_json(j.at("hyper"));
    if (p.hyper.hidden1 != h1 || p.hyper.hidden2 != h2)
      throw IngestionError("model file: hyper.hidden disagrees with dims");
    const auto& imp = j.at("weights").at("imp");
    p.imp.w1 = detail::matrix_from_json(imp.at("W1"), h1, d, "weights.imp.W1");
    p.imp.b1 = detail::vector_from_json(imp.at("b1"), h1, "weights.imp.b1");
    p.imp.w2 = detail::matrix_from_json(imp.at("W2"), h2, h1, "weights.imp.W2");
    p.imp.b2 = detail::vector_from_json(imp.at("b2"), h2, "weights.imp.b2");
    p.imp.w3 = detail::matrix_from_json(imp.at("W3"), 1, h2, "weights.imp.W3");
    p.imp.b3 = detail::vector_from_json(imp.at("b3"), 1, "weights.imp.b3");
    const auto& cls = j.at("weights").at("classifier");
    p.classifier.w = detail::matrix_from_json(cls.at("W"), c, d, "weights.classifier.W");
    p.classifier.b = detail::vector_from_json(cls.at("b"), c, "weights.classifier.b");
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("model file: ") + e.what());
  }
}

inline void save_model(const ModelParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot open for writing: " + path);
  out << model_to_json(p).dump(2) << '\n';
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace adascan
