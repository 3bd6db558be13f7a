// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <json.hpp>

#include "vil/error.hpp"
#include "vil/posepipe.hpp"

namespace vil::pose {

const ObjectModel* ShipModel::find(int class_id) const {
  for (const auto& p : parts)
    if (p.class_id == class_id) return &p;
  return nullptr;
}

void ShipModel::validate() const {
  if (parts.empty()) throw InvalidArgument("ship model has no parts");
  std::set<int> ids;
  for (const auto& p : parts) {
    if (p.class_id < 0 || p.class_id >= kNumClasses) {
      throw InvalidArgument(fmt::format("part '{}': class id {} outside [0,{})", p.name, p.class_id, kNumClasses));
    }
    if (!ids.insert(p.class_id).second) throw InvalidArgument(fmt::format("duplicate class id {}", p.class_id));
    if (p.model_points.size() < 4) throw InvalidArgument(fmt::format("part '{}' needs at least 4 keypoints", p.name));
    Vec3 c = Vec3::Zero();
    for (const auto& q : p.model_points) c += q;
    c /= static_cast<double>(p.model_points.size());
    Mat3 s = Mat3::Zero();
    for (const auto& q : p.model_points) s += (q - c) * (q - c).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(s);
    if (!(es.eigenvalues()(1) > 1e-12 * es.eigenvalues()(2))) {
      throw InvalidArgument(fmt::format("part '{}' keypoints are collinear", p.name));
    }
  }
}

std::vector<std::pair<Vec3, Vec3>> default_part_boxes() {
  return {
      {{-3.0, -1.5, -1.5}, {-1.5, 1.5, 0.0}},  // stern
      {{-1.5, -1.6, -0.4}, {1.5, 1.6, 0.0}},   // flight deck
      {{1.5, -1.3, 0.0}, {3.2, 1.3, 2.0}},     // hangar
      {{3.2, -1.1, 0.0}, {5.4, 1.1, 3.2}},     // superstructure
      {{3.9, -0.4, 3.2}, {4.7, 0.4, 5.2}},     // mast
      {{5.4, -1.3, -1.5}, {8.5, 1.3, 0.6}},    // bow
  };
}

ShipModel default_ship_model() {
  static const char* names[kNumClasses] = {"stern", "flight_deck", "hangar", "superstructure", "mast", "bow"};
  const auto boxes = default_part_boxes();
  ShipModel m;
  for (int c = 0; c < kNumClasses; ++c) {
    ObjectModel part{c, names[c], {}};
    const auto& [lo, hi] = boxes[c];
    for (int i = 0; i < 8; ++i) {
      part.model_points.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
    }
    m.parts.push_back(std::move(part));
  }
  return m;
}

ShipModel load_ship_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open ship model '{}'", path.string()));
  ShipModel m;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& c : j.at("classes")) {
      ObjectModel part;
      part.class_id = c.at("class_id").get<int>();
      part.name = c.value("name", fmt::format("class{}", part.class_id));
      for (const auto& k : c.at("keypoints")) {
        if (k.size() != 3) throw IoError("keypoints must be [x, y, z] triples");
        part.model_points.emplace_back(k[0].get<double>(), k[1].get<double>(), k[2].get<double>());
      }
      m.parts.push_back(std::move(part));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("ship model '{}': {}", path.string(), e.what()));
  }
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(fmt::format("ship model '{}': {}", path.string(), e.what()));
  }
  return m;
}

void save_ship_model(const ShipModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["frame"] = "ship: origin at flight-deck center, x forward, z up, meters";
  j["classes"] = nlohmann::json::array();
  for (const auto& p : model.parts) {
    nlohmann::json c;
    c["class_id"] = p.class_id;
    c["name"] = p.name;
    c["keypoints"] = nlohmann::json::array();
    for (const auto& q : p.model_points) c["keypoints"].push_back({q.x(), q.y(), q.z()});
    j["classes"].push_back(std::move(c));
  }
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write ship model '{}'", path.string()));
  out << j.dump(2) << "\n";
}

}  // namespace vil::pose
