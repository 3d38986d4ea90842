#include "bevcoord/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <utility>

#include <openssl/evp.h>

#include "bevcoord/errors.hpp"

#include <CLI11.hpp>

namespace bevcoord {
namespace {

namespace fs = std::filesystem;

double wrap_pi(double a) {
  double w = std::remainder(a, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

// ---------------------------------------------------------------------------
// Strict config readers. Config problems are ConfigError throughout, so the
// CLI maps them all onto the config exit code.
// ---------------------------------------------------------------------------

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) {
    throw ConfigError(path + ": expected a JSON object");
  }
}

void check_config_keys(const Json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end()) {
      throw ConfigError(path + ": unknown config key '" + key + "'");
    }
  }
}

double cfg_num(const Json& j, const char* key, double fallback,
               const std::string& path) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_number()) {
    throw ConfigError(path + "." + key + ": expected a number");
  }
  return v.get<double>();
}

int cfg_int(const Json& j, const char* key, int fallback,
            const std::string& path) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError(path + "." + key + ": expected an integer");
  }
  return v.get<int>();
}

std::uint64_t cfg_u64(const Json& j, const char* key, std::uint64_t fallback,
                      const std::string& path) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<std::int64_t>() < 0)) {
    throw ConfigError(path + "." + key + ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string cfg_str(const Json& j, const char* key, std::string fallback,
                    const std::string& path) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_string()) {
    throw ConfigError(path + "." + key + ": expected a string");
  }
  return v.get<std::string>();
}

void check_range(bool ok, const std::string& path, const std::string& rule) {
  if (!ok) throw ConfigError(path + ": " + rule);
}

AgentNoise agent_noise_from_cfg(const Json& j, const std::string& path) {
  check_config_keys(j, path,
                    {"sigma_pos_m", "sigma_vel_mps", "sigma_size_m",
                     "sigma_heading_rad", "miss_prob", "fp_rate"});
  AgentNoise n;
  n.sigma_pos_m = cfg_num(j, "sigma_pos_m", n.sigma_pos_m, path);
  n.sigma_vel_mps = cfg_num(j, "sigma_vel_mps", n.sigma_vel_mps, path);
  n.sigma_size_m = cfg_num(j, "sigma_size_m", n.sigma_size_m, path);
  n.sigma_heading_rad = cfg_num(j, "sigma_heading_rad", n.sigma_heading_rad, path);
  n.miss_prob = cfg_num(j, "miss_prob", n.miss_prob, path);
  n.fp_rate = cfg_num(j, "fp_rate", n.fp_rate, path);
  return n;
}

Json noise_to_json(const AgentNoise& n) {
  Json j;
  j["sigma_pos_m"] = n.sigma_pos_m;
  j["sigma_vel_mps"] = n.sigma_vel_mps;
  j["sigma_size_m"] = n.sigma_size_m;
  j["sigma_heading_rad"] = n.sigma_heading_rad;
  j["miss_prob"] = n.miss_prob;
  j["fp_rate"] = n.fp_rate;
  return j;
}

SimConfig sim_config_from_cfg(const Json& j, const std::string& path) {
  if (j.is_object() && j.contains("rng_seed")) {
    throw ConfigError(path +
                      ".rng_seed: the simulator follows the top-level seed; "
                      "set that instead");
  }
  check_config_keys(
      j, path,
      {"min_entities", "max_entities", "extent_m", "min_spacing_m",
       "ego_clear_m", "placement_retries", "allowed_classes", "lidar",
       "bevfusion", "conflict_prob", "radar_scatter_m", "radar_sigma_range_m",
       "radar_sigma_azimuth_rad", "radar_sigma_doppler_mps",
       "radar_mean_returns", "radar_miss_prob", "radar_clutter_rate",
       "dbscan_eps_m", "dbscan_min_pts", "camera_max_range_m",
       "camera_sigma_px", "camera_miss_prob", "camera_fp_rate",
       "base_class_prob"});
  SimConfig c;
  c.min_entities = cfg_int(j, "min_entities", c.min_entities, path);
  c.max_entities = cfg_int(j, "max_entities", c.max_entities, path);
  c.extent_m = cfg_num(j, "extent_m", c.extent_m, path);
  c.min_spacing_m = cfg_num(j, "min_spacing_m", c.min_spacing_m, path);
  c.ego_clear_m = cfg_num(j, "ego_clear_m", c.ego_clear_m, path);
  c.placement_retries = cfg_int(j, "placement_retries", c.placement_retries, path);
  if (j.contains("allowed_classes")) {
    const Json& a = j.at("allowed_classes");
    if (!a.is_array()) {
      throw ConfigError(path + ".allowed_classes: expected an array of strings");
    }
    c.allowed_classes.clear();
    for (const Json& v : a) {
      if (!v.is_string()) {
        throw ConfigError(path + ".allowed_classes: expected an array of strings");
      }
      c.allowed_classes.push_back(v.get<std::string>());
    }
  }
  if (j.contains("lidar")) {
    c.lidar = agent_noise_from_cfg(j.at("lidar"), path + ".lidar");
  }
  if (j.contains("bevfusion")) {
    c.bevfusion = agent_noise_from_cfg(j.at("bevfusion"), path + ".bevfusion");
  }
  c.conflict_prob = cfg_num(j, "conflict_prob", c.conflict_prob, path);
  c.radar_scatter_m = cfg_num(j, "radar_scatter_m", c.radar_scatter_m, path);
  c.radar_sigma_range_m =
      cfg_num(j, "radar_sigma_range_m", c.radar_sigma_range_m, path);
  c.radar_sigma_azimuth_rad =
      cfg_num(j, "radar_sigma_azimuth_rad", c.radar_sigma_azimuth_rad, path);
  c.radar_sigma_doppler_mps =
      cfg_num(j, "radar_sigma_doppler_mps", c.radar_sigma_doppler_mps, path);
  c.radar_mean_returns = cfg_num(j, "radar_mean_returns", c.radar_mean_returns, path);
  c.radar_miss_prob = cfg_num(j, "radar_miss_prob", c.radar_miss_prob, path);
  c.radar_clutter_rate = cfg_num(j, "radar_clutter_rate", c.radar_clutter_rate, path);
  c.dbscan_eps_m = cfg_num(j, "dbscan_eps_m", c.dbscan_eps_m, path);
  c.dbscan_min_pts = cfg_int(j, "dbscan_min_pts", c.dbscan_min_pts, path);
  c.camera_max_range_m = cfg_num(j, "camera_max_range_m", c.camera_max_range_m, path);
  c.camera_sigma_px = cfg_num(j, "camera_sigma_px", c.camera_sigma_px, path);
  c.camera_miss_prob = cfg_num(j, "camera_miss_prob", c.camera_miss_prob, path);
  c.camera_fp_rate = cfg_num(j, "camera_fp_rate", c.camera_fp_rate, path);
  c.base_class_prob = cfg_num(j, "base_class_prob", c.base_class_prob, path);
  return c;
}

Json sim_to_json(const SimConfig& c) {
  Json j;
  j["min_entities"] = c.min_entities;
  j["max_entities"] = c.max_entities;
  j["extent_m"] = c.extent_m;
  j["min_spacing_m"] = c.min_spacing_m;
  j["ego_clear_m"] = c.ego_clear_m;
  j["placement_retries"] = c.placement_retries;
  j["allowed_classes"] = c.allowed_classes;
  j["lidar"] = noise_to_json(c.lidar);
  j["bevfusion"] = noise_to_json(c.bevfusion);
  j["conflict_prob"] = c.conflict_prob;
  j["radar_scatter_m"] = c.radar_scatter_m;
  j["radar_sigma_range_m"] = c.radar_sigma_range_m;
  j["radar_sigma_azimuth_rad"] = c.radar_sigma_azimuth_rad;
  j["radar_sigma_doppler_mps"] = c.radar_sigma_doppler_mps;
  j["radar_mean_returns"] = c.radar_mean_returns;
  j["radar_miss_prob"] = c.radar_miss_prob;
  j["radar_clutter_rate"] = c.radar_clutter_rate;
  j["dbscan_eps_m"] = c.dbscan_eps_m;
  j["dbscan_min_pts"] = c.dbscan_min_pts;
  j["camera_max_range_m"] = c.camera_max_range_m;
  j["camera_sigma_px"] = c.camera_sigma_px;
  j["camera_miss_prob"] = c.camera_miss_prob;
  j["camera_fp_rate"] = c.camera_fp_rate;
  j["base_class_prob"] = c.base_class_prob;
  return j;
}

AssociationConfig association_config_from_cfg(const Json& j,
                                              const std::string& path) {
  check_config_keys(j, path,
                    {"gate_radius_m", "gate_euclidean_m", "gate_mahalanobis_sq",
                     "lambda_class", "lambda_size", "camera_iou_threshold",
                     "velocity_gate_mps", "radar_confidence_floor", "z_min"});
  AssociationConfig c;
  c.gate_radius_m = cfg_num(j, "gate_radius_m", c.gate_radius_m, path);
  c.gate_euclidean_m = cfg_num(j, "gate_euclidean_m", c.gate_euclidean_m, path);
  c.gate_mahalanobis_sq =
      cfg_num(j, "gate_mahalanobis_sq", c.gate_mahalanobis_sq, path);
  c.lambda_class = cfg_num(j, "lambda_class", c.lambda_class, path);
  c.lambda_size = cfg_num(j, "lambda_size", c.lambda_size, path);
  c.camera_iou_threshold =
      cfg_num(j, "camera_iou_threshold", c.camera_iou_threshold, path);
  c.velocity_gate_mps = cfg_num(j, "velocity_gate_mps", c.velocity_gate_mps, path);
  c.radar_confidence_floor =
      cfg_num(j, "radar_confidence_floor", c.radar_confidence_floor, path);
  c.z_min = cfg_num(j, "z_min", c.z_min, path);
  check_range(c.gate_radius_m > 0, path + ".gate_radius_m", "must be positive");
  check_range(c.gate_euclidean_m > 0, path + ".gate_euclidean_m",
              "must be positive");
  check_range(c.gate_mahalanobis_sq > 0, path + ".gate_mahalanobis_sq",
              "must be positive");
  check_range(c.lambda_class >= 0, path + ".lambda_class",
              "must be non-negative");
  check_range(c.lambda_size >= 0, path + ".lambda_size", "must be non-negative");
  check_range(c.camera_iou_threshold > 0 && c.camera_iou_threshold <= 1,
              path + ".camera_iou_threshold", "must be in (0,1]");
  check_range(c.velocity_gate_mps > 0, path + ".velocity_gate_mps",
              "must be positive");
  check_range(c.radar_confidence_floor >= 0 && c.radar_confidence_floor <= 1,
              path + ".radar_confidence_floor", "must be in [0,1]");
  check_range(c.z_min > 0, path + ".z_min", "must be positive");
  return c;
}

Json association_to_json(const AssociationConfig& c) {
  Json j;
  j["gate_radius_m"] = c.gate_radius_m;
  j["gate_euclidean_m"] = c.gate_euclidean_m;
  j["gate_mahalanobis_sq"] = c.gate_mahalanobis_sq;
  j["lambda_class"] = c.lambda_class;
  j["lambda_size"] = c.lambda_size;
  j["camera_iou_threshold"] = c.camera_iou_threshold;
  j["velocity_gate_mps"] = c.velocity_gate_mps;
  j["radar_confidence_floor"] = c.radar_confidence_floor;
  j["z_min"] = c.z_min;
  return j;
}

FusionConfig fusion_config_from_cfg(const Json& j, const std::string& path) {
  check_config_keys(j, path,
                    {"beta", "tau_class", "initial_reliability", "gate_pass_p",
                     "gate_suspicious_p", "ci_omega", "ci_omega_biased",
                     "ci_residual_ratio", "regularization"});
  FusionConfig c;
  c.beta = cfg_num(j, "beta", c.beta, path);
  c.tau_class = cfg_num(j, "tau_class", c.tau_class, path);
  c.initial_reliability = cfg_num(j, "initial_reliability", c.initial_reliability, path);
  c.gate_pass_p = cfg_num(j, "gate_pass_p", c.gate_pass_p, path);
  c.gate_suspicious_p = cfg_num(j, "gate_suspicious_p", c.gate_suspicious_p, path);
  c.ci_omega = cfg_num(j, "ci_omega", c.ci_omega, path);
  c.ci_omega_biased = cfg_num(j, "ci_omega_biased", c.ci_omega_biased, path);
  c.ci_residual_ratio = cfg_num(j, "ci_residual_ratio", c.ci_residual_ratio, path);
  c.regularization = cfg_num(j, "regularization", c.regularization, path);
  check_range(c.beta >= 0 && c.beta < 1, path + ".beta", "must be in [0,1)");
  check_range(c.tau_class >= 0 && c.tau_class <= 1, path + ".tau_class",
              "must be in [0,1]");
  check_range(c.initial_reliability >= 0 && c.initial_reliability <= 1,
              path + ".initial_reliability", "must be in [0,1]");
  check_range(c.gate_pass_p > 0 && c.gate_pass_p < 1, path + ".gate_pass_p",
              "must be in (0,1)");
  check_range(c.gate_suspicious_p >= c.gate_pass_p && c.gate_suspicious_p < 1,
              path + ".gate_suspicious_p",
              "must be in [gate_pass_p, 1)");
  check_range(c.ci_omega >= 0 && c.ci_omega <= 1, path + ".ci_omega",
              "must be in [0,1]");
  check_range(c.ci_omega_biased >= 0 && c.ci_omega_biased <= 1,
              path + ".ci_omega_biased", "must be in [0,1]");
  check_range(c.ci_residual_ratio >= 1, path + ".ci_residual_ratio",
              "must be at least 1");
  check_range(c.regularization > 0, path + ".regularization",
              "must be positive");
  return c;
}

Json fusion_to_json(const FusionConfig& c) {
  Json j;
  j["beta"] = c.beta;
  j["tau_class"] = c.tau_class;
  j["initial_reliability"] = c.initial_reliability;
  j["gate_pass_p"] = c.gate_pass_p;
  j["gate_suspicious_p"] = c.gate_suspicious_p;
  j["ci_omega"] = c.ci_omega;
  j["ci_omega_biased"] = c.ci_omega_biased;
  j["ci_residual_ratio"] = c.ci_residual_ratio;
  j["regularization"] = c.regularization;
  return j;
}

MetricThresholds metrics_from_cfg(const Json& j, const std::string& path) {
  check_config_keys(j, path,
                    {"iou_tau", "position_tol_m", "heading_tol_rad", "camera_iou"});
  MetricThresholds t;
  t.iou_tau = cfg_num(j, "iou_tau", t.iou_tau, path);
  t.position_tol_m = cfg_num(j, "position_tol_m", t.position_tol_m, path);
  t.heading_tol_rad = cfg_num(j, "heading_tol_rad", t.heading_tol_rad, path);
  t.camera_iou = cfg_num(j, "camera_iou", t.camera_iou, path);
  check_range(t.iou_tau > 0 && t.iou_tau <= 1, path + ".iou_tau",
              "must be in (0,1]");
  check_range(t.position_tol_m > 0, path + ".position_tol_m", "must be positive");
  check_range(t.heading_tol_rad > 0, path + ".heading_tol_rad",
              "must be positive");
  check_range(t.camera_iou > 0 && t.camera_iou <= 1, path + ".camera_iou",
              "must be in (0,1]");
  return t;
}

Json metrics_to_json(const MetricThresholds& t) {
  Json j;
  j["iou_tau"] = t.iou_tau;
  j["position_tol_m"] = t.position_tol_m;
  j["heading_tol_rad"] = t.heading_tol_rad;
  j["camera_iou"] = t.camera_iou;
  return j;
}

QaConfig qa_config_from_cfg(const Json& j, const std::string& path) {
  check_config_keys(
      j, path,
      {"lane_halfwidth_m", "side_min_m", "near_max_m", "ttc_threshold_s",
       "horizon_s", "stop_ttc_s", "lead_range_m", "blocked_range_m",
       "static_speed_mps", "side_clear_min_m", "side_clear_max_m",
       "side_clear_behind_m"});
  QaConfig c;
  c.lane_halfwidth_m = cfg_num(j, "lane_halfwidth_m", c.lane_halfwidth_m, path);
  c.side_min_m = cfg_num(j, "side_min_m", c.side_min_m, path);
  c.near_max_m = cfg_num(j, "near_max_m", c.near_max_m, path);
  c.ttc_threshold_s = cfg_num(j, "ttc_threshold_s", c.ttc_threshold_s, path);
  c.horizon_s = cfg_num(j, "horizon_s", c.horizon_s, path);
  c.stop_ttc_s = cfg_num(j, "stop_ttc_s", c.stop_ttc_s, path);
  c.lead_range_m = cfg_num(j, "lead_range_m", c.lead_range_m, path);
  c.blocked_range_m = cfg_num(j, "blocked_range_m", c.blocked_range_m, path);
  c.static_speed_mps = cfg_num(j, "static_speed_mps", c.static_speed_mps, path);
  c.side_clear_min_m = cfg_num(j, "side_clear_min_m", c.side_clear_min_m, path);
  c.side_clear_max_m = cfg_num(j, "side_clear_max_m", c.side_clear_max_m, path);
  c.side_clear_behind_m =
      cfg_num(j, "side_clear_behind_m", c.side_clear_behind_m, path);
  check_range(c.lane_halfwidth_m > 0, path + ".lane_halfwidth_m",
              "must be positive");
  check_range(c.side_min_m > 0, path + ".side_min_m", "must be positive");
  check_range(c.near_max_m > 0, path + ".near_max_m", "must be positive");
  check_range(c.ttc_threshold_s > 0, path + ".ttc_threshold_s",
              "must be positive");
  check_range(c.horizon_s > 0, path + ".horizon_s", "must be positive");
  check_range(c.stop_ttc_s > 0 && c.stop_ttc_s <= c.ttc_threshold_s,
              path + ".stop_ttc_s", "must be in (0, ttc_threshold_s]");
  check_range(c.lead_range_m > 0, path + ".lead_range_m", "must be positive");
  check_range(c.blocked_range_m > 0, path + ".blocked_range_m",
              "must be positive");
  check_range(c.static_speed_mps >= 0, path + ".static_speed_mps",
              "must be non-negative");
  check_range(c.side_clear_min_m > 0, path + ".side_clear_min_m",
              "must be positive");
  check_range(c.side_clear_max_m > c.side_clear_min_m, path + ".side_clear_max_m",
              "must exceed side_clear_min_m");
  check_range(c.side_clear_behind_m > 0, path + ".side_clear_behind_m",
              "must be positive");
  return c;
}

Json qa_to_json(const QaConfig& c) {
  Json j;
  j["lane_halfwidth_m"] = c.lane_halfwidth_m;
  j["side_min_m"] = c.side_min_m;
  j["near_max_m"] = c.near_max_m;
  j["ttc_threshold_s"] = c.ttc_threshold_s;
  j["horizon_s"] = c.horizon_s;
  j["stop_ttc_s"] = c.stop_ttc_s;
  j["lead_range_m"] = c.lead_range_m;
  j["blocked_range_m"] = c.blocked_range_m;
  j["static_speed_mps"] = c.static_speed_mps;
  j["side_clear_min_m"] = c.side_clear_min_m;
  j["side_clear_max_m"] = c.side_clear_max_m;
  j["side_clear_behind_m"] = c.side_clear_behind_m;
  return j;
}

// ---------------------------------------------------------------------------
// Work scheduling: index-order outputs stay deterministic regardless of the
// job count because results land in preallocated slots.
// ---------------------------------------------------------------------------

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  std::size_t total = 0;
  for (const auto& l : lines) total += l.size();
  out.reserve(total);
  for (const auto& l : lines) out += l;
  return out;
}

std::string record_label(const std::string& path, std::size_t index) {
  return path + ":record " + std::to_string(index + 1);
}

Calibration load_calibration(const std::string& path) {
  if (path.empty()) return default_calibration();
  return calibration_from_json(parse_json(read_text_file(path), path), path);
}

// ---------------------------------------------------------------------------
// Replay backend: feeds recorded responses back to the engine in call order.
// Stage mismatches and exhaustion are transport failures, mirroring a remote
// backend that stopped cooperating.
// ---------------------------------------------------------------------------

class ReplayBackend final : public Backend {
 public:
  ReplayBackend(std::vector<Json> records, std::string label)
      : records_(std::move(records)), label_(std::move(label)) {}

  std::string name() const override { return "replay"; }

  std::string complete(const BackendRequest& request) override {
    if (next_ >= records_.size()) {
      throw TransportError(label_ + ": replay trace exhausted at call " +
                           std::to_string(next_ + 1) + " (stage " +
                           request.stage + ")");
    }
    const Json& rec = records_[next_];
    ++next_;
    const std::string stage =
        rec.contains("stage") && rec.at("stage").is_string()
            ? rec.at("stage").get<std::string>()
            : std::string();
    if (stage != request.stage) {
      throw TransportError(label_ + ": replay trace out of sync at call " +
                           std::to_string(next_) + ": expected stage '" +
                           request.stage + "', trace has '" + stage + "'");
    }
    if (!rec.contains("response") || !rec.at("response").is_string()) {
      throw TransportError(label_ + ": replay record " + std::to_string(next_) +
                           " has no response text");
    }
    return rec.at("response").get<std::string>();
  }

 private:
  std::vector<Json> records_;
  std::string label_;
  std::size_t next_ = 0;
};

std::uint64_t scene_seed(std::uint64_t base, int index) {
  return base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(index + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig run_config_from_json(const Json& j, const std::string& path) {
  check_config_keys(j, path,
                    {"run_id", "seed", "n_scenes", "sim", "association",
                     "fusion", "ssre", "metrics", "qa"});
  RunConfig cfg;
  cfg.run_id = cfg_str(j, "run_id", cfg.run_id, path);
  if (cfg.run_id.empty()) {
    throw ConfigError(path + ".run_id: must not be empty");
  }
  cfg.seed = cfg_u64(j, "seed", cfg.seed, path);
  cfg.n_scenes = cfg_int(j, "n_scenes", cfg.n_scenes, path);
  check_range(cfg.n_scenes >= 0, path + ".n_scenes", "must be non-negative");
  if (j.contains("sim")) {
    cfg.sim = sim_config_from_cfg(j.at("sim"), path + ".sim");
  }
  cfg.sim.rng_seed = cfg.seed;
  if (j.contains("association")) {
    cfg.association =
        association_config_from_cfg(j.at("association"), path + ".association");
  }
  if (j.contains("fusion")) {
    cfg.fusion = fusion_config_from_cfg(j.at("fusion"), path + ".fusion");
  }
  if (j.contains("ssre")) {
    try {
      cfg.ssre = ssre_config_from_json(j.at("ssre"), path + ".ssre");
    } catch (const SchemaError& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("metrics")) {
    cfg.metrics = metrics_from_cfg(j.at("metrics"), path + ".metrics");
  }
  if (j.contains("qa")) {
    cfg.qa = qa_config_from_cfg(j.at("qa"), path + ".qa");
  }
  try {
    validate(cfg.sim, path + ".sim");
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

Json to_json(const RunConfig& config) {
  Json j;
  j["run_id"] = config.run_id;
  j["seed"] = config.seed;
  j["n_scenes"] = config.n_scenes;
  j["sim"] = sim_to_json(config.sim);
  j["association"] = association_to_json(config.association);
  j["fusion"] = fusion_to_json(config.fusion);
  j["ssre"] = to_json(config.ssre);
  j["metrics"] = metrics_to_json(config.metrics);
  j["qa"] = qa_to_json(config.qa);
  return j;
}

RunConfig load_run_config(const std::string& file_path) {
  if (file_path.empty()) {
    RunConfig cfg;
    cfg.sim.rng_seed = cfg.seed;
    return cfg;
  }
  Json j;
  try {
    j = parse_json(read_text_file(file_path), file_path);
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(j, file_path);
}

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr ||
      EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &length) != 1) {
    EVP_MD_CTX_free(ctx);
    throw InternalError("sha256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot read file '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) {
    throw ConfigError("read failed for '" + path + "'");
  }
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) {
    fs::create_directories(p.parent_path(), ec);
    if (ec) {
      throw ConfigError("cannot create directory '" + p.parent_path().string() +
                        "': " + ec.message());
    }
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot write file '" + path + "'");
  }
  out << content;
  out.flush();
  if (!out) {
    throw ConfigError("write failed for '" + path + "'");
  }
}

// ---------------------------------------------------------------------------
// Naive union ablation
// ---------------------------------------------------------------------------

SceneSummary naive_union_summary(const SceneFactBundle& bundle,
                                 const FusionConfig& config) {
  struct Keyed {
    double x;
    double y;
    std::string type;
    std::string source;
    int local_id;
    FusedEntity entity;
  };
  std::vector<Keyed> keyed;
  for (const AgentFactSet& agent : bundle.agents) {
    if (agent.agent_kind == AgentKind::kCamera) continue;
    const std::string source = to_string(agent.agent_kind);
    for (const Detection3D& det : agent.detections_3d) {
      FusedEntity e;
      // Argmax class; vocabulary order breaks ties, matching the fused path.
      double best = -1.0;
      for (const std::string& cls : class_vocabulary()) {
        auto it = det.class_probs.find(cls);
        const double p = it == det.class_probs.end() ? 0.0 : it->second;
        if (p > best) {
          best = p;
          e.type = cls;
        }
      }
      e.class_confidence = std::clamp(best, 0.0, 1.0);
      e.position_bev = det.center_ego.head<2>();
      e.position_cov =
          det.position_cov.value_or(Eigen::Matrix2d::Identity() *
                                    config.default_variance(agent.agent_kind,
                                                            Attribute::kPosition));
      if (det.velocity_bev) {
        e.velocity_bev = det.velocity_bev;
        e.velocity_cov = det.velocity_cov.value_or(
            Eigen::Matrix2d::Identity() *
            config.default_variance(agent.agent_kind, Attribute::kVelocity));
      }
      e.size = det.size;
      e.heading_rad = wrap_pi(det.heading_rad);
      e.sources = {source};
      AttributeLineage lineage;
      lineage.sources = {source};
      lineage.rule = "naive_union";
      lineage.values[source] =
          Json::array({det.center_ego.x(), det.center_ego.y()});
      e.lineage["position"] = std::move(lineage);
      keyed.push_back({det.center_ego.x(), det.center_ego.y(), e.type, source,
                       det.local_id, std::move(e)});
    }
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.x, a.y, a.type, a.source, a.local_id) <
           std::tie(b.x, b.y, b.type, b.source, b.local_id);
  });
  SceneSummary summary;
  summary.scene_id = bundle.scene_id;
  summary.timestamp_us = bundle.timestamp_us;
  summary.ego_state.speed_mps = bundle.ego_speed_mps;
  int next_id = 1;
  for (Keyed& k : keyed) {
    k.entity.entity_id = "ID_" + std::to_string(next_id++);
    validate(k.entity, "naive_union." + k.entity.entity_id);
    summary.entities.push_back(std::move(k.entity));
  }
  refresh_entity_types(summary);
  return summary;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

void cmd_simulate(const SimulateOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.sim.rng_seed = cfg.seed;
  }
  if (opt.n_scenes) {
    cfg.n_scenes = *opt.n_scenes;
    check_range(cfg.n_scenes >= 0, "--scenes", "must be non-negative");
  }
  check_range(opt.jobs >= 1, "--jobs", "must be at least 1");

  const Calibration calib = default_calibration();
  const int n = cfg.n_scenes;
  std::vector<std::string> scene_lines(static_cast<std::size_t>(n));
  std::vector<std::string> fact_lines(static_cast<std::size_t>(n));
  std::vector<std::vector<CorrespondenceRecord>> correspondence(
      static_cast<std::size_t>(n));
  parallel_for(n, opt.jobs, [&](int i) {
    const GroundTruthScene gt = generate_scene(cfg.sim, i);
    SceneObservation obs = observe_scene(gt, cfg.sim, calib);
    scene_lines[static_cast<std::size_t>(i)] = canonical_dump_line(to_json(gt));
    fact_lines[static_cast<std::size_t>(i)] =
        canonical_dump_line(to_json(obs.bundle));
    correspondence[static_cast<std::size_t>(i)] = std::move(obs.correspondence);
  });

  std::vector<std::string> corr_lines;
  for (const auto& rows : correspondence) {
    for (const CorrespondenceRecord& row : rows) {
      corr_lines.push_back(canonical_dump_line(to_json(row)));
    }
  }

  const std::string scenes_text = join_lines(scene_lines);
  const std::string facts_text = join_lines(fact_lines);
  const std::string corr_text = join_lines(corr_lines);
  const std::string calib_text = canonical_dump_line(to_json(calib));
  const std::string config_text = canonical_dump_line(to_json(cfg));

  const fs::path dir(opt.output_dir);
  write_text_file((dir / "scenes.jsonl").string(), scenes_text);
  write_text_file((dir / "facts.jsonl").string(), facts_text);
  write_text_file((dir / "correspondence.jsonl").string(), corr_text);
  write_text_file((dir / "calibration.json").string(), calib_text);
  write_text_file((dir / "config.json").string(), config_text);

  Json files = Json::object();
  files["calibration.json"] = sha256_hex(calib_text);
  files["config.json"] = sha256_hex(config_text);
  files["correspondence.jsonl"] = sha256_hex(corr_text);
  files["facts.jsonl"] = sha256_hex(facts_text);
  files["scenes.jsonl"] = sha256_hex(scenes_text);
  Json manifest;
  manifest["run_id"] = cfg.run_id;
  manifest["seed"] = cfg.seed;
  manifest["n_scenes"] = n;
  manifest["config_sha256"] = sha256_hex(config_text);
  manifest["files"] = std::move(files);
  write_text_file((dir / "manifest.json").string(),
                  canonical_dump_line(manifest));
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

void cmd_fuse(const FuseOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.facts_path.empty()) {
    throw ConfigError("fuse: --facts is required");
  }
  if (opt.no_ica && !opt.trace_path.empty()) {
    throw ConfigError(
        "fuse: --trace records the coordination pipeline; drop --no-ica");
  }
  const Calibration calib = load_calibration(opt.calibration_path);
  const std::vector<Json> lines =
      parse_jsonl(read_text_file(opt.facts_path), opt.facts_path);

  ReliabilityLedger ledger(cfg.fusion.initial_reliability, cfg.fusion.beta);
  std::vector<std::string> out_lines;
  std::vector<std::string> trace_lines;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const SceneFactBundle bundle =
        fact_bundle_from_json(lines[i], record_label(opt.facts_path, i));
    SceneSummary summary;
    Json trace = Json::array();
    if (opt.no_ica) {
      summary = naive_union_summary(bundle, cfg.fusion);
    } else {
      const std::vector<SeedEntity> seeds =
          associate_hierarchical(bundle.agents, calib, cfg.association);
      std::map<std::string, std::vector<std::string>> agent_lineage;
      for (const AgentFactSet& agent : bundle.agents) {
        agent_lineage[to_string(agent.agent_kind)] = agent.source_lineage;
      }
      SceneMeta meta;
      meta.scene_id = bundle.scene_id;
      meta.timestamp_us = bundle.timestamp_us;
      meta.ego_speed_mps = bundle.ego_speed_mps;
      FusionOutcome outcome =
          fuse_scene(seeds, meta, ledger, agent_lineage, cfg.fusion);
      for (const auto& [agent, score] : outcome.frame_scores) {
        ledger.update(agent_kind_from_string(agent, "frame_scores"), score);
      }
      summary = std::move(outcome.summary);
      trace = std::move(outcome.trace);
    }
    out_lines.push_back(canonical_dump_line(to_json(summary)));
    if (!opt.trace_path.empty()) {
      Json t;
      t["scene_id"] = bundle.scene_id;
      t["entities"] = std::move(trace);
      trace_lines.push_back(canonical_dump_line(t));
    }
  }
  write_text_file(opt.output_path, join_lines(out_lines));
  if (!opt.trace_path.empty()) {
    write_text_file(opt.trace_path, join_lines(trace_lines));
  }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

void cmd_evaluate(const EvaluateOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.gt_path.empty()) {
    throw ConfigError("evaluate: --gt is required");
  }
  if (opt.runs.empty()) {
    throw ConfigError("evaluate: at least one --run label=path is required");
  }
  check_range(opt.jobs >= 1, "--jobs", "must be at least 1");
  {
    std::set<std::string> labels;
    for (const EvaluateRun& run : opt.runs) {
      if (run.label.empty() || run.summaries_path.empty()) {
        throw ConfigError("evaluate: --run expects label=path");
      }
      if (!labels.insert(run.label).second) {
        throw ConfigError("evaluate: duplicate run label '" + run.label + "'");
      }
    }
  }

  const std::vector<Json> gt_lines =
      parse_jsonl(read_text_file(opt.gt_path), opt.gt_path);
  std::vector<GroundTruthScene> gts;
  std::set<std::string> gt_ids;
  for (std::size_t i = 0; i < gt_lines.size(); ++i) {
    gts.push_back(gt_scene_from_json(gt_lines[i], record_label(opt.gt_path, i)));
    if (!gt_ids.insert(gts.back().scene_id).second) {
      throw SchemaError(record_label(opt.gt_path, i),
                        "duplicate scene_id '" + gts.back().scene_id + "'");
    }
  }

  const bool have_facts = !opt.facts_path.empty();
  std::map<std::string, SceneFactBundle> facts;
  Calibration calib;
  if (have_facts) {
    calib = load_calibration(opt.calibration_path);
    const std::vector<Json> fact_lines =
        parse_jsonl(read_text_file(opt.facts_path), opt.facts_path);
    for (std::size_t i = 0; i < fact_lines.size(); ++i) {
      SceneFactBundle bundle =
          fact_bundle_from_json(fact_lines[i], record_label(opt.facts_path, i));
      const std::string id = bundle.scene_id;
      if (!facts.emplace(id, std::move(bundle)).second) {
        throw SchemaError(record_label(opt.facts_path, i),
                          "duplicate scene_id '" + id + "'");
      }
    }
    for (const GroundTruthScene& gt : gts) {
      if (facts.find(gt.scene_id) == facts.end()) {
        throw SchemaError(opt.facts_path,
                          "no fact bundle for scene '" + gt.scene_id + "'");
      }
    }
  }

  std::vector<std::pair<std::string, MetricValues>> rows;
  Json report_json = Json::object();
  for (const EvaluateRun& run : opt.runs) {
    const std::vector<Json> sum_lines =
        parse_jsonl(read_text_file(run.summaries_path), run.summaries_path);
    std::map<std::string, SceneSummary> summaries;
    for (std::size_t i = 0; i < sum_lines.size(); ++i) {
      SceneSummary s = scene_summary_from_json(
          sum_lines[i], record_label(run.summaries_path, i));
      const std::string id = s.scene_id;
      if (gt_ids.find(id) == gt_ids.end()) {
        throw SchemaError(record_label(run.summaries_path, i),
                          "summary for unknown scene '" + id + "'");
      }
      if (!summaries.emplace(id, std::move(s)).second) {
        throw SchemaError(record_label(run.summaries_path, i),
                          "duplicate scene_id '" + id + "'");
      }
    }
    for (const GroundTruthScene& gt : gts) {
      if (summaries.find(gt.scene_id) == summaries.end()) {
        throw SchemaError(run.summaries_path,
                          "no summary for scene '" + gt.scene_id + "'");
      }
    }

    std::vector<std::pair<std::string, SceneCounts>> per_scene(gts.size());
    parallel_for(static_cast<int>(gts.size()), opt.jobs, [&](int i) {
      const GroundTruthScene& gt = gts[static_cast<std::size_t>(i)];
      const SceneSummary& summary = summaries.at(gt.scene_id);
      const SceneFactBundle* bundle =
          have_facts ? &facts.at(gt.scene_id) : nullptr;
      const Calibration* cal = have_facts ? &calib : nullptr;
      per_scene[static_cast<std::size_t>(i)] = {
          gt.scene_id, evaluate_scene(summary, gt, bundle, cal, cfg.metrics)};
    });
    const ConsistencyReport report = make_report(per_scene);
    report_json[run.label] = report_to_json(report);
    rows.emplace_back(run.label, metrics_from_counts(report.totals));
  }

  const std::string table = report_table(rows);
  const std::string svg = report_svg(rows);
  const fs::path dir(opt.output_dir);
  write_text_file((dir / "report.json").string(),
                  canonical_dump_line(report_json));
  write_text_file((dir / "report.txt").string(), table);
  write_text_file((dir / "report.svg").string(), svg);
  std::cout << table;
}

// ---------------------------------------------------------------------------
// reason
// ---------------------------------------------------------------------------

void cmd_reason(const ReasonOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.summaries_path.empty()) {
    throw ConfigError("reason: --summaries is required");
  }
  if (opt.query.empty()) {
    throw ConfigError("reason: --query is required");
  }
  if (!opt.backend.empty() && !opt.replay_path.empty()) {
    throw ConfigError("reason: --backend and --replay are mutually exclusive");
  }
  SsreConfig ssre = cfg.ssre;
  if (!opt.backend.empty()) ssre.backend = opt.backend;

  const std::vector<Json> sum_lines =
      parse_jsonl(read_text_file(opt.summaries_path), opt.summaries_path);
  std::vector<SceneSummary> selected;
  for (std::size_t i = 0; i < sum_lines.size(); ++i) {
    SceneSummary s = scene_summary_from_json(
        sum_lines[i], record_label(opt.summaries_path, i));
    if (opt.scene_id.empty() || s.scene_id == opt.scene_id) {
      selected.push_back(std::move(s));
    }
  }
  if (!opt.scene_id.empty() && selected.empty()) {
    throw ConfigError("reason: scene '" + opt.scene_id + "' not found in " +
                      opt.summaries_path);
  }

  // Optional auxiliary context A: the agents' own one-line synopses.
  std::map<std::string, std::string> aux;
  if (!opt.facts_path.empty()) {
    const std::vector<Json> fact_lines =
        parse_jsonl(read_text_file(opt.facts_path), opt.facts_path);
    for (std::size_t i = 0; i < fact_lines.size(); ++i) {
      const SceneFactBundle bundle =
          fact_bundle_from_json(fact_lines[i], record_label(opt.facts_path, i));
      std::string text;
      for (const AgentFactSet& agent : bundle.agents) {
        if (agent.synopsis.empty()) continue;
        if (!text.empty()) text += "\n";
        text += to_string(agent.agent_kind) + ": " + agent.synopsis;
      }
      aux[bundle.scene_id] = std::move(text);
    }
  }

  std::map<std::string, std::vector<Json>> replay;
  if (!opt.replay_path.empty()) {
    const std::vector<Json> trace_lines =
        parse_jsonl(read_text_file(opt.replay_path), opt.replay_path);
    for (std::size_t i = 0; i < trace_lines.size(); ++i) {
      const Json& rec = trace_lines[i];
      if (!rec.is_object() || !rec.contains("scene_id") ||
          !rec.at("scene_id").is_string()) {
        throw SchemaError(record_label(opt.replay_path, i),
                          "trace record must carry a scene_id string");
      }
      replay[rec.at("scene_id").get<std::string>()].push_back(rec);
    }
    for (auto& [id, records] : replay) {
      (void)id;
      std::stable_sort(records.begin(), records.end(),
                       [](const Json& a, const Json& b) {
                         return a.value("call_index", 0) <
                                b.value("call_index", 0);
                       });
    }
  }

  std::unique_ptr<Backend> shared;
  if (opt.replay_path.empty()) {
    shared = make_backend(ssre.backend);
  }

  std::vector<std::string> out_lines;
  std::vector<std::string> trace_out;
  for (const SceneSummary& summary : selected) {
    std::unique_ptr<Backend> replay_backend;
    Backend* backend = shared.get();
    if (!opt.replay_path.empty()) {
      auto it = replay.find(summary.scene_id);
      if (it == replay.end()) {
        throw ConfigError("reason: replay trace has no records for scene '" +
                          summary.scene_id + "'");
      }
      replay_backend = std::make_unique<ReplayBackend>(
          it->second, opt.replay_path + " [" + summary.scene_id + "]");
      backend = replay_backend.get();
    }
    std::optional<std::string> scene_aux;
    auto aux_it = aux.find(summary.scene_id);
    if (aux_it != aux.end() && !aux_it->second.empty()) {
      scene_aux = aux_it->second;
    }
    const SsreResult result =
        run_ssre(summary, opt.query, scene_aux, ssre, *backend);
    Json line;
    line["scene_id"] = summary.scene_id;
    line["query"] = opt.query;
    line["result"] = to_json(result);
    out_lines.push_back(canonical_dump_line(line));
    if (!opt.trace_path.empty()) {
      for (const TraceRecord& rec : result.trace) {
        Json t = to_json(rec);
        t["scene_id"] = summary.scene_id;
        trace_out.push_back(canonical_dump_line(t));
      }
    }
  }
  write_text_file(opt.output_path, join_lines(out_lines));
  if (!opt.trace_path.empty()) {
    write_text_file(opt.trace_path, join_lines(trace_out));
  }
}

// ---------------------------------------------------------------------------
// qagen
// ---------------------------------------------------------------------------

void cmd_qagen(const QagenOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.scenes_path.empty()) {
    throw ConfigError("qagen: --scenes is required");
  }
  check_range(opt.per_scene >= 0, "--per-scene", "must be non-negative");
  check_range(opt.jobs >= 1, "--jobs", "must be at least 1");
  const std::uint64_t base_seed = opt.seed.value_or(cfg.seed);

  std::vector<QaFamily> families;
  if (opt.families.empty()) {
    families = {QaFamily::kRelation, QaFamily::kCounting, QaFamily::kRisk,
                QaFamily::kDecision};
  } else {
    for (const std::string& name : opt.families) {
      families.push_back(qa_family_from_string(name, "--families"));
    }
  }

  const std::vector<Json> lines =
      parse_jsonl(read_text_file(opt.scenes_path), opt.scenes_path);
  std::vector<QaScene> scenes;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string label = record_label(opt.scenes_path, i);
    const Json& j = lines[i];
    if (!j.is_object()) {
      throw SchemaError(label, "expected a JSON object");
    }
    // Ground truth carries "ego"; fused summaries carry "ego_state".
    if (j.contains("ego_state")) {
      scenes.push_back(qa_scene(scene_summary_from_json(j, label)));
    } else {
      scenes.push_back(qa_scene(gt_scene_from_json(j, label)));
    }
  }

  std::vector<std::string> chunks(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), opt.jobs, [&](int i) {
    const std::vector<QaPair> pairs =
        generate_qa(scenes[static_cast<std::size_t>(i)], families,
                    opt.per_scene, scene_seed(base_seed, i), cfg.qa);
    std::string chunk;
    for (const QaPair& pair : pairs) {
      chunk += canonical_dump_line(to_json(pair));
    }
    chunks[static_cast<std::size_t>(i)] = std::move(chunk);
  });
  write_text_file(opt.output_path, join_lines(chunks));
}

// ---------------------------------------------------------------------------
// CLI front end
// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{
      "Deterministic multi-sensor scene coordination and verified reasoning "
      "toolkit"};
  app.require_subcommand(1);

  SimulateOptions sim_opt;
  CLI::App* sim = app.add_subcommand(
      "simulate", "Generate scenes, agent fact sets, and a hashed manifest");
  sim->add_option("--config", sim_opt.config_path, "Run config JSON file");
  sim->add_option("--out", sim_opt.output_dir, "Output directory")
      ->capture_default_str();
  sim->add_option("--scenes", sim_opt.n_scenes, "Scene count override");
  sim->add_option("--seed", sim_opt.seed, "Seed override");
  sim->add_option("--jobs", sim_opt.jobs, "Worker threads")
      ->check(CLI::Range(1, 256));

  FuseOptions fuse_opt;
  CLI::App* fuse = app.add_subcommand(
      "fuse", "Coordinate agent fact sets into scene summaries");
  fuse->add_option("--config", fuse_opt.config_path, "Run config JSON file");
  fuse->add_option("--facts", fuse_opt.facts_path, "Fact bundle JSONL")
      ->required();
  fuse->add_option("--calibration", fuse_opt.calibration_path,
                   "Calibration JSON (defaults to the built-in rig)");
  fuse->add_option("--out", fuse_opt.output_path, "Summary JSONL output")
      ->capture_default_str();
  fuse->add_option("--trace", fuse_opt.trace_path,
                   "Write per-scene fusion traces to this JSONL file");
  fuse->add_flag("--no-ica", fuse_opt.no_ica,
                 "Bypass coordination with the naive union of detections");

  EvaluateOptions eval_opt;
  std::vector<std::string> eval_runs;
  CLI::App* eval = app.add_subcommand(
      "evaluate", "Score summary runs against ground truth");
  eval->add_option("--config", eval_opt.config_path, "Run config JSON file");
  eval->add_option("--gt", eval_opt.gt_path, "Ground truth JSONL")->required();
  eval->add_option("--run", eval_runs,
                   "label=summaries.jsonl (repeatable)")
      ->required();
  eval->add_option("--facts", eval_opt.facts_path,
                   "Fact bundle JSONL enabling conflict and miss accounting");
  eval->add_option("--calibration", eval_opt.calibration_path,
                   "Calibration JSON (defaults to the built-in rig)");
  eval->add_option("--out", eval_opt.output_dir, "Report output directory")
      ->capture_default_str();
  eval->add_option("--jobs", eval_opt.jobs, "Worker threads")
      ->check(CLI::Range(1, 256));

  ReasonOptions reason_opt;
  CLI::App* reason = app.add_subcommand(
      "reason", "Run the verifier-audited reasoning chain over summaries");
  reason->add_option("--config", reason_opt.config_path, "Run config JSON file");
  reason->add_option("--summaries", reason_opt.summaries_path,
                     "Scene summary JSONL")
      ->required();
  reason->add_option("--query", reason_opt.query, "Driving query Q")->required();
  reason->add_option("--scene", reason_opt.scene_id,
                     "Only reason about this scene id");
  reason->add_option("--backend", reason_opt.backend,
                     "Backend spec: oracle | http | always_major | "
                     "adversarial[:seed]");
  reason->add_option("--facts", reason_opt.facts_path,
                     "Fact bundle JSONL; agent synopses become aux context");
  reason->add_option("--out", reason_opt.output_path, "Decision JSONL output")
      ->capture_default_str();
  reason->add_option("--trace", reason_opt.trace_path,
                     "Write the backend-call audit trace to this JSONL file");
  reason->add_option("--replay", reason_opt.replay_path,
                     "Re-run from a recorded trace instead of a live backend");

  QagenOptions qa_opt;
  CLI::App* qagen = app.add_subcommand(
      "qagen", "Generate question-answer pairs from scenes or summaries");
  qagen->add_option("--config", qa_opt.config_path, "Run config JSON file");
  qagen->add_option("--scenes", qa_opt.scenes_path,
                    "Ground truth or summary JSONL")
      ->required();
  qagen->add_option("--families", qa_opt.families,
                    "Comma-separated subset of relation,counting,risk,decision")
      ->delimiter(',');
  qagen->add_option("--per-scene", qa_opt.per_scene, "Pairs per scene")
      ->capture_default_str();
  qagen->add_option("--seed", qa_opt.seed, "Seed override");
  qagen->add_option("--out", qa_opt.output_path, "QA JSONL output")
      ->capture_default_str();
  qagen->add_option("--jobs", qa_opt.jobs, "Worker threads")
      ->check(CLI::Range(1, 256));

  sim->callback([&] { cmd_simulate(sim_opt); });
  fuse->callback([&] { cmd_fuse(fuse_opt); });
  eval->callback([&] {
    for (const std::string& spec : eval_runs) {
      const std::size_t eq = spec.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
        throw ConfigError("evaluate: --run expects label=path, got '" + spec +
                          "'");
      }
      eval_opt.runs.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
    }
    cmd_evaluate(eval_opt);
  });
  reason->callback([&] { cmd_reason(reason_opt); });
  qagen->callback([&] { cmd_qagen(qa_opt); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace bevcoord
