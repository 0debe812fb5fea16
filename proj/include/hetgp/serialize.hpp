#pragma once

// Versioned JSON documents for fitted models. Only parameters and the design
// statistics are stored; factorizations are rebuilt on load.

#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "hetgp/errors.hpp"
#include "hetgp/het.hpp"
#include "hetgp/hom.hpp"
#include "hetgp/sk.hpp"

namespace hetgp {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline json to_json_vec(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json design_to_json(const ReplicatedDesign& d) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    rows.push_back(to_json_vec(d.X0.row(i).transpose()));
  }
  std::vector<int> mult(d.mult.data(), d.mult.data() + d.mult.size());
  return {{"X0", rows}, {"Z0", to_json_vec(d.Z0)}, {"mult", mult},
          {"S2", to_json_vec(d.S2)}, {"N", d.N}};
}

inline ReplicatedDesign design_from_json(const json& j) {
  ReplicatedDesign d;
  const auto& rows = j.at("X0");
  if (!rows.is_array() || rows.empty()) {
    throw ValidationError("model file: empty design");
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto dim = static_cast<Eigen::Index>(rows.at(0).size());
  d.X0.resize(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd r = vec_from_json(rows.at(static_cast<std::size_t>(i)));
    if (r.size() != dim) {
      throw ValidationError("model file: ragged X0");
    }
    d.X0.row(i) = r.transpose();
  }
  d.Z0 = vec_from_json(j.at("Z0"));
  const auto mult = j.at("mult").get<std::vector<int>>();
  d.mult = Eigen::Map<const Eigen::VectorXi>(mult.data(), static_cast<Eigen::Index>(mult.size()));
  d.S2 = vec_from_json(j.at("S2"));
  d.N = j.at("N").get<Eigen::Index>();
  d.validate();
  return d;
}

inline json kernel_to_json(const KernelSpec& k) {
  return {{"family", std::string(to_string(k.family))}, {"lengthscales", to_json_vec(k.lengthscales)}};
}

inline KernelSpec kernel_from_json(const json& j) {
  return KernelSpec(kernel_family_from_string(j.at("family").get<std::string>()),
                    vec_from_json(j.at("lengthscales")));
}

inline json hom_body(const HomModel& m) {
  return {{"kernel", kernel_to_json(m.kernel())}, {"g", m.g()}, {"nu_hat", m.nu_hat()},
          {"log_likelihood", m.log_likelihood()}};
}

inline json header(const char* type) {
  return {{"format", "hetgp-model"}, {"version", kModelFormatVersion}, {"type", type}};
}

}  // namespace detail

inline nlohmann::json to_json(const HomModel& m) {
  auto j = detail::header("hom");
  j.update(detail::hom_body(m));
  j["design"] = detail::design_to_json(m.design());
  return j;
}

inline nlohmann::json to_json(const HetModel& m) {
  auto j = detail::header("het");
  j["kernel_mean"] = detail::kernel_to_json(m.kernel_mean());
  j["kernel_noise"] = detail::kernel_to_json(m.kernel_noise());
  j["g"] = m.g();
  j["delta"] = detail::to_json_vec(m.delta());
  j["log_lambda"] = detail::to_json_vec(m.log_lambda());
  j["nu_hat"] = m.nu_hat();
  j["nu_g"] = m.nu_g();
  j["joint_loglik"] = m.joint_loglik();
  j["mean_loglik"] = m.mean_loglik();
  j["fallback"] = m.fallback();
  if (m.hom()) {
    j["hom"] = detail::hom_body(*m.hom());
  }
  j["design"] = detail::design_to_json(m.design());
  return j;
}

inline nlohmann::json to_json(const SKModel& m) {
  auto j = detail::header("sk");
  j["kernel"] = detail::kernel_to_json(m.kernel());
  j["nu"] = m.nu();
  j["variance_gp"] = detail::hom_body(m.variance_gp());
  j["design"] = detail::design_to_json(m.design());
  return j;
}

/// Any of the three model kinds, restored from JSON.
struct LoadedModel {
  std::string type;
  std::optional<HomModel> hom;
  std::optional<HetModel> het;
  std::optional<SKModel> sk;

  Predictions predict(const Eigen::MatrixXd& Xnew) const {
    if (het) {
      return het->predict(Xnew);
    }
    if (sk) {
      return sk->predict(Xnew);
    }
    return hom->predict(Xnew);
  }
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "hetgp-model") {
      throw ValidationError("model file: unknown format");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ValidationError("model file: unsupported version");
    }
    LoadedModel out;
    out.type = j.at("type").get<std::string>();
    const ReplicatedDesign design = detail::design_from_json(j.at("design"));
    auto hom_from = [](const nlohmann::json& b, const ReplicatedDesign& d) {
      return HomModel::build(d, detail::kernel_from_json(b.at("kernel")), b.at("g").get<double>());
    };
    if (out.type == "hom") {
      out.hom = hom_from(j, design);
    } else if (out.type == "het") {
      HetModel m = HetModel::build(design, detail::kernel_from_json(j.at("kernel_mean")),
                                   detail::kernel_from_json(j.at("kernel_noise")),
                                   j.at("g").get<double>(), detail::vec_from_json(j.at("delta")));
      if (j.contains("hom")) {
        m.set_hom(hom_from(j.at("hom"), design), j.value("fallback", false));
      }
      out.het = std::move(m);
    } else if (out.type == "sk") {
      const ReplicatedDesign vdesign = unreplicated(design.X0, sk_sigma2(design));
      out.sk = SKModel::build(design, detail::kernel_from_json(j.at("kernel")),
                              j.at("nu").get<double>(), hom_from(j.at("variance_gp"), vdesign));
    } else {
      throw ValidationError("model file: unknown model type '" + out.type + "'");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

inline void save_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << j.dump(2) << '\n';
  if (!out) {
    throw IoError("write failed for " + path);
  }
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace hetgp
