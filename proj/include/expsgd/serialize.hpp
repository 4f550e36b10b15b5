#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "expsgd/errors.hpp"
#include "expsgd/feature_map.hpp"
#include "expsgd/hypothesis.hpp"

namespace expsgd {

using Json = nlohmann::json;

inline Json to_json(const FeatureMap& map) {
  Json j;
  j["kind"] = std::string(map.kind_name());
  j["input_dim"] = map.input_dim();
  j["output_dim"] = map.output_dim();
  if (map.kind() == FeatureKind::linear_with_bias) {
    j["max_input_norm"] = map.max_input_norm();
  } else {
    j["bandwidth"] = map.bandwidth();
    j["seed"] = map.seed();
  }
  return j;
}

inline FeatureMap feature_map_from_json(const Json& j) {
  const std::string kind = j.at("kind");
  if (kind == "linear_with_bias") {
    return FeatureMap::linear_with_bias(j.at("input_dim"), j.at("max_input_norm"));
  }
  if (kind == "random_fourier") {
    return FeatureMap::random_fourier(j.at("input_dim"), j.at("output_dim"),
                                      j.at("bandwidth"), j.at("seed"));
  }
  throw ConfigError("unknown feature map kind: " + kind);
}

inline Json to_json(const Hypothesis& g) {
  Json j;
  if (g.representation() == Representation::weights) {
    j["representation"] = "weights";
    j["weights"] = std::vector<double>(g.weights().data(), g.weights().data() + g.weights().size());
    return j;
  }
  j["representation"] = "kernel_expansion";
  j["lazy_scale"] = g.lazy_scale();
  j["kernel"] = g.kernel_spec().kind == KernelSpec::Kind::feature_dot ? "feature_dot" : "gaussian";
  j["sigma"] = g.kernel_spec().sigma;
  Json centers = Json::array();
  for (std::size_t i = 0; i < g.centers().size(); ++i) {
    Json row = Json::array();
    for (Eigen::Index d = 0; d < g.centers()[i].size(); ++d) row.push_back(g.centers()[i](d));
    row.push_back(g.raw_coefficients()[i]);
    centers.push_back(row);
  }
  j["centers"] = centers;
  return j;
}

inline Hypothesis hypothesis_from_json(const Json& j, const FeatureMap& map) {
  const std::string rep = j.at("representation");
  if (rep == "weights") {
    const std::vector<double> w = j.at("weights");
    Eigen::VectorXd wv(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) wv(static_cast<Eigen::Index>(i)) = w[i];
    return Hypothesis::from_weights(std::move(wv));
  }
  if (rep != "kernel_expansion") throw ConfigError("unknown representation: " + rep);
  KernelSpec spec;
  spec.kind = j.at("kernel") == "gaussian" ? KernelSpec::Kind::gaussian
                                           : KernelSpec::Kind::feature_dot;
  spec.sigma = j.value("sigma", 1.0);
  std::vector<Eigen::VectorXd> centers;
  std::vector<double> coeffs;
  for (const auto& row : j.at("centers")) {
    const std::vector<double> vals = row;
    if (vals.size() < 2) throw ConfigError("kernel expansion center needs point and coefficient");
    Eigen::VectorXd x(static_cast<Eigen::Index>(vals.size() - 1));
    for (std::size_t d = 0; d + 1 < vals.size(); ++d) x(static_cast<Eigen::Index>(d)) = vals[d];
    centers.push_back(std::move(x));
    coeffs.push_back(vals.back());
  }
  Hypothesis g = Hypothesis::kernel_expansion_from(spec, std::move(centers), coeffs, map);
  const double lazy = j.value("lazy_scale", 1.0);
  if (lazy != 1.0) g.scale_by(lazy);
  return g;
}

/// A model file bundles the hypothesis with its feature map (and loss name),
/// which is everything `evaluate` needs.
inline Json model_to_json(const Hypothesis& g, const FeatureMap& map,
                          const std::string& loss_name) {
  Json j;
  j["feature_map"] = to_json(map);
  j["hypothesis"] = to_json(g);
  j["loss"] = loss_name;
  return j;
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open json: " + path);
  Json j;
  in >> j;
  return j;
}

}  // namespace expsgd
