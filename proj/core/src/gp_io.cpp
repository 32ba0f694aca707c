#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seqdesign/gp.hpp"

namespace seqdesign::gp {

namespace {

using nlohmann::json;
constexpr int kFormatVersion = 1;

json row_major(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ConfigError("matrix data length mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
  }
  return m;
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string to_json(const TrainedGP& gp) {
  json latent = json::array();
  for (const auto& k : gp.spec().latent) {
    latent.push_back({{"family", to_string(k.family)}, {"lengthscales", to_vec(k.lengthscales)}, {"variance", k.variance}});
  }
  json doc{
      {"format_version", kFormatVersion},
      {"spec", {{"latent", latent}, {"mixing", row_major(gp.spec().mixing)}, {"nugget", to_vec(gp.spec().nugget)}}},
      {"scaling", {{"shift", to_vec(gp.scaling().shift)}, {"scale", to_vec(gp.scaling().scale)}}},
      {"inputs", row_major(gp.inputs())},
      {"outputs", row_major(gp.outputs())},
  };
  return doc.dump(2);
}

TrainedGP gp_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid GP document: ") + e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != kFormatVersion) throw ConfigError("unsupported GP format_version");
    KernelSpec spec;
    for (const auto& k : doc.at("spec").at("latent")) {
      spec.latent.push_back({parse_kernel_family(k.at("family").get<std::string>()), vec_from(k.at("lengthscales")),
                             k.at("variance").get<double>()});
    }
    spec.mixing = matrix_from(doc.at("spec").at("mixing"));
    spec.nugget = vec_from(doc.at("spec").at("nugget"));
    OutputScaling scaling{vec_from(doc.at("scaling").at("shift")), vec_from(doc.at("scaling").at("scale"))};
    return condition(spec, matrix_from(doc.at("inputs")), matrix_from(doc.at("outputs")), scaling);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed GP document: ") + e.what());
  }
}

void save_gp(const TrainedGP& gp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json(gp) << '\n';
}

TrainedGP load_gp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return gp_from_json(ss.str());
}

}  // namespace seqdesign::gp
