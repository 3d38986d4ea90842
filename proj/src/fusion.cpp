#include "bevcoord/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "bevcoord/errors.hpp"
#include "bevcoord/stats.hpp"

namespace bevcoord {

std::string to_string(Attribute attr) {
  switch (attr) {
    case Attribute::kPosition: return "position";
    case Attribute::kVelocity: return "velocity";
    case Attribute::kSize: return "size";
    case Attribute::kHeading: return "heading";
    case Attribute::kClass: return "class";
  }
  throw InternalError("unknown Attribute");
}

double FusionConfig::default_variance(AgentKind agent, Attribute attr) const {
  switch (attr) {
    case Attribute::kPosition:
      switch (agent) {
        case AgentKind::kLidar: return 0.04;
        case AgentKind::kBevFusion: return 0.09;
        case AgentKind::kRadar: return 0.25;
        default: return 0.25;
      }
    case Attribute::kVelocity:
      switch (agent) {
        case AgentKind::kLidar: return 0.04;
        case AgentKind::kBevFusion: return 0.09;
        case AgentKind::kRadar: return 0.25;
        default: return 0.25;
      }
    case Attribute::kSize: return 0.04;
    case Attribute::kHeading: return 0.01;
    case Attribute::kClass: return 0.0;
  }
  throw InternalError("unknown Attribute");
}

double FusionConfig::modality_prior(AgentKind agent, Attribute attr) const {
  switch (attr) {
    case Attribute::kPosition:
      switch (agent) {
        case AgentKind::kLidar: return 0.9;
        case AgentKind::kBevFusion: return 0.8;
        case AgentKind::kRadar: return 0.5;
        case AgentKind::kCamera: return 0.0;
      }
      break;
    case Attribute::kVelocity:
      switch (agent) {
        case AgentKind::kRadar: return 0.9;
        case AgentKind::kBevFusion: return 0.7;
        case AgentKind::kLidar: return 0.5;
        case AgentKind::kCamera: return 0.0;
      }
      break;
    case Attribute::kSize:
      switch (agent) {
        case AgentKind::kLidar: return 0.9;
        case AgentKind::kBevFusion: return 0.8;
        default: return 0.0;
      }
      break;
    case Attribute::kHeading:
      switch (agent) {
        case AgentKind::kLidar: return 0.8;
        case AgentKind::kBevFusion: return 0.8;
        default: return 0.0;
      }
      break;
    case Attribute::kClass:
      switch (agent) {
        case AgentKind::kCamera: return 0.9;
        case AgentKind::kBevFusion: return 0.9;
        case AgentKind::kLidar: return 0.6;
        case AgentKind::kRadar: return 0.05;
      }
      break;
  }
  return 0.0;
}

double ReliabilityLedger::get(AgentKind agent) const {
  auto it = values_.find(to_string(agent));
  return it == values_.end() ? initial_ : it->second;
}

void ReliabilityLedger::update(AgentKind agent, double score) {
  if (score < 0.0 || score > 1.0) {
    throw InternalError("reliability score must lie in [0,1]");
  }
  const double current = get(agent);
  values_[to_string(agent)] = beta_ * current + (1.0 - beta_) * score;
}

Json ReliabilityLedger::to_json() const {
  Json j;
  j["initial"] = initial_;
  j["beta"] = beta_;
  j["values"] = Json(values_);
  return j;
}

ReliabilityLedger ReliabilityLedger::from_json(const Json& j,
                                               const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  ReliabilityLedger ledger;
  if (j.contains("initial")) ledger.initial_ = j["initial"].get<double>();
  if (j.contains("beta")) ledger.beta_ = j["beta"].get<double>();
  if (j.contains("values")) {
    const Json& values = j["values"];
    if (!values.is_object()) throw SchemaError(path + ".values", "expected an object");
    for (auto it = values.begin(); it != values.end(); ++it) {
      if (!it.value().is_number()) {
        throw SchemaError(path + ".values." + it.key(), "expected a number");
      }
      ledger.values_[it.key()] = it.value().get<double>();
    }
  }
  return ledger;
}

WeightResult compute_weights(const std::vector<WeightInputs>& inputs) {
  WeightResult out;
  out.weights.resize(inputs.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const WeightInputs& w = inputs[i];
    out.weights[i] = w.modality_prior * w.reliability * w.confidence *
                     w.uncertainty * w.consistency;
    sum += out.weights[i];
  }
  if (sum <= 0.0) {
    out.degenerate = true;
    return out;
  }
  for (double& w : out.weights) w /= sum;
  return out;
}

double consistency_factor(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref,
                          const Eigen::MatrixXd& cov_ref) {
  const Eigen::VectorXd r = x - x_ref;
  const double statistic = r.dot(cov_ref.inverse() * r);
  return std::exp(-statistic);
}

GaussianEstimate fuse_continuous(const std::vector<Eigen::VectorXd>& values,
                                 const std::vector<Eigen::MatrixXd>& covariances,
                                 const std::vector<double>& weights,
                                 double regularization) {
  if (values.empty() || values.size() != covariances.size() ||
      values.size() != weights.size()) {
    throw InternalError("fuse_continuous: mismatched inputs");
  }
  const Eigen::Index d = values.front().size();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd info_mean = Eigen::VectorXd::Zero(d);
  for (std::size_t k = 0; k < values.size(); ++k) {
    Eigen::MatrixXd cov = covariances[k];
    cov += regularization * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd inv = cov.inverse();
    info += weights[k] * inv;
    info_mean += weights[k] * (inv * values[k]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (!lu.isInvertible()) {
    throw InternalError("fuse_continuous: singular information sum");
  }
  GaussianEstimate out;
  out.cov = lu.inverse();
  out.mean = out.cov * info_mean;
  return out;
}

GaussianEstimate covariance_intersection(const GaussianEstimate& a,
                                         const GaussianEstimate& b,
                                         double omega,
                                         double regularization) {
  if (omega < 0.0 || omega > 1.0) {
    throw InternalError("covariance_intersection: omega must lie in [0,1]");
  }
  const Eigen::Index d = a.mean.size();
  Eigen::MatrixXd cov_a = a.cov + regularization * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd cov_b = b.cov + regularization * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd inv_a = cov_a.inverse();
  const Eigen::MatrixXd inv_b = cov_b.inverse();
  const Eigen::MatrixXd info = omega * inv_a + (1.0 - omega) * inv_b;
  GaussianEstimate out;
  out.cov = info.inverse();
  out.mean = out.cov * (omega * inv_a * a.mean + (1.0 - omega) * inv_b * b.mean);
  return out;
}

std::pair<std::string, double> fuse_categorical(
    const std::vector<std::map<std::string, double>>& distributions,
    const std::vector<double>& weights) {
  if (distributions.size() != weights.size()) {
    throw InternalError("fuse_categorical: mismatched inputs");
  }
  std::map<std::string, double> conf;
  for (std::size_t k = 0; k < distributions.size(); ++k) {
    for (const auto& [name, p] : distributions[k]) {
      conf[name] += weights[k] * p;
    }
  }
  if (conf.empty()) throw InternalError("fuse_categorical: no evidence");
  std::string best;
  double best_p = -1.0;
  for (const auto& name : class_vocabulary()) {
    auto it = conf.find(name);
    if (it != conf.end() && it->second > best_p) {
      best_p = it->second;
      best = name;
    }
  }
  return {best, best_p};
}

GateCategory residual_gate(double statistic, int dof, const FusionConfig& config) {
  if (statistic <= stats::chi2_quantile(dof, config.gate_pass_p)) {
    return GateCategory::kPass;
  }
  if (statistic <= stats::chi2_quantile(dof, config.gate_suspicious_p)) {
    return GateCategory::kSuspicious;
  }
  return GateCategory::kVeto;
}

namespace {

struct ContinuousObs {
  std::string source_key;  // agent kind string (unique per seed for 3D attrs)
  AgentKind agent;
  Eigen::VectorXd value;
  Eigen::MatrixXd cov;
  double confidence = 1.0;
};

struct ContinuousResult {
  GaussianEstimate estimate;
  AttributeLineage lineage;
  std::vector<double> gate_statistics;            // one per observation
  std::vector<GateCategory> gate_categories;      // one per observation
  std::vector<std::string> gate_sources;          // agent string per observation
  bool fallback = false;
  Json trace;
};

Json vecxd_to_json(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

bool lineages_overlap(const std::map<std::string, std::vector<std::string>>& all,
                      const std::string& a, const std::string& b) {
  auto ia = all.find(a);
  auto ib = all.find(b);
  if (ia == all.end() || ib == all.end()) return false;
  for (const auto& base : ia->second) {
    if (std::find(ib->second.begin(), ib->second.end(), base) !=
        ib->second.end()) {
      return true;
    }
  }
  return false;
}

// Shared continuous-attribute path: residual gating against the unweighted
// seed reference, weight product, covariance intersection for source pairs
// with shared lineage, then the weighted information filter.
ContinuousResult fuse_attribute(
    const std::vector<ContinuousObs>& obs, Attribute attr,
    const ReliabilityLedger& ledger,
    const std::map<std::string, std::vector<std::string>>& agent_lineage,
    const FusionConfig& config) {
  if (obs.empty()) throw InternalError("fuse_attribute: no observations");
  const Eigen::Index d = obs.front().value.size();
  const int dof = static_cast<int>(d);

  ContinuousResult result;

  // Unweighted seed reference for the residual gate.
  Eigen::VectorXd x_bar = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd cov_bar = Eigen::MatrixXd::Zero(d, d);
  for (const auto& o : obs) {
    x_bar += o.value;
    cov_bar += o.cov;
  }
  x_bar /= static_cast<double>(obs.size());
  cov_bar /= static_cast<double>(obs.size());
  cov_bar += config.regularization * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd cov_bar_inv = cov_bar.inverse();

  std::vector<WeightInputs> inputs;
  for (const auto& o : obs) {
    const Eigen::VectorXd r = o.value - x_bar;
    const double g = obs.size() >= 2 ? r.dot(cov_bar_inv * r) : 0.0;
    const GateCategory cat = residual_gate(g, dof, config);
    result.gate_statistics.push_back(g);
    result.gate_categories.push_back(cat);
    result.gate_sources.push_back(to_string(o.agent));

    WeightInputs w;
    w.modality_prior = config.modality_prior(o.agent, attr);
    w.reliability = ledger.get(o.agent);
    w.confidence = o.confidence;
    w.uncertainty = 1.0 / (1.0 + o.cov.trace());
    w.consistency = cat == GateCategory::kVeto ? 0.0 : std::exp(-g);
    inputs.push_back(w);
  }

  WeightResult weights = compute_weights(inputs);
  if (weights.degenerate) {
    // Every product collapsed; fall back to the most confident source alone.
    std::size_t best = 0;
    for (std::size_t k = 1; k < obs.size(); ++k) {
      if (obs[k].confidence > obs[best].confidence) best = k;
    }
    weights.weights.assign(obs.size(), 0.0);
    weights.weights[best] = 1.0;
    result.fallback = true;
  }

  // Work lists that covariance intersection may contract.
  struct Entry {
    std::string source_key;
    Eigen::VectorXd value;
    Eigen::MatrixXd cov;
    double weight;
    double gate;
    std::vector<std::string> members;  // agent strings folded into this entry
  };
  std::vector<Entry> entries;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    entries.push_back({obs[k].source_key, obs[k].value, obs[k].cov,
                       weights.weights[k], result.gate_statistics[k],
                       {to_string(obs[k].agent)}});
  }

  bool used_ci = false;
  for (bool merged = true; merged;) {
    merged = false;
    for (std::size_t i = 0; i < entries.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < entries.size() && !merged; ++j) {
        bool correlated = false;
        for (const auto& ma : entries[i].members) {
          for (const auto& mb : entries[j].members) {
            if (lineages_overlap(agent_lineage, ma, mb)) correlated = true;
          }
        }
        if (!correlated) continue;
        double omega = config.ci_omega;
        // Bias toward the source with the clearly smaller residual.
        if (entries[j].gate > config.ci_residual_ratio * entries[i].gate) {
          omega = config.ci_omega_biased;
        } else if (entries[i].gate > config.ci_residual_ratio * entries[j].gate) {
          omega = 1.0 - config.ci_omega_biased;
        }
        GaussianEstimate merged_est = covariance_intersection(
            {entries[i].value, entries[i].cov}, {entries[j].value, entries[j].cov},
            omega, config.regularization);
        Entry e;
        e.source_key = entries[i].source_key + "+" + entries[j].source_key;
        e.value = merged_est.mean;
        e.cov = merged_est.cov;
        e.weight = entries[i].weight + entries[j].weight;
        e.gate = std::min(entries[i].gate, entries[j].gate);
        e.members = entries[i].members;
        e.members.insert(e.members.end(), entries[j].members.begin(),
                         entries[j].members.end());
        entries.erase(entries.begin() + static_cast<long>(j));
        entries[i] = std::move(e);
        used_ci = true;
        merged = true;
      }
    }
  }

  // Zero-weight entries cannot feed the information filter (their blend
  // share is zero); drop them unless everything is zero weight.
  std::vector<Eigen::VectorXd> values;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<double> w;
  for (const auto& e : entries) {
    if (e.weight > 0.0) {
      values.push_back(e.value);
      covs.push_back(e.cov);
      w.push_back(e.weight);
    }
  }
  if (values.empty()) {
    values.push_back(entries.front().value);
    covs.push_back(entries.front().cov);
    w.push_back(1.0);
    result.fallback = true;
  }
  result.estimate = fuse_continuous(values, covs, w, config.regularization);

  result.lineage.rule = used_ci ? "covariance_intersection+information_filter"
                                : "information_filter";
  result.lineage.fallback = result.fallback;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (weights.weights[k] > 0.0 || result.fallback) {
      result.lineage.sources.push_back(to_string(obs[k].agent));
    }
    result.lineage.values[obs[k].source_key] = vecxd_to_json(obs[k].value);
  }

  Json trace;
  trace["rule"] = result.lineage.rule;
  Json tw = Json::array();
  Json tg = Json::array();
  Json ts = Json::array();
  for (std::size_t k = 0; k < obs.size(); ++k) {
    ts.push_back(obs[k].source_key);
    tw.push_back(weights.weights[k]);
    tg.push_back(result.gate_statistics[k]);
  }
  trace["sources"] = ts;
  trace["weights"] = tw;
  trace["gate_statistics"] = tg;
  trace["fallback"] = result.fallback;
  result.trace = trace;
  return result;
}

double score_for(GateCategory cat) {
  switch (cat) {
    case GateCategory::kPass: return 1.0;
    case GateCategory::kSuspicious: return 0.5;
    case GateCategory::kVeto: return 0.0;
  }
  throw InternalError("unknown GateCategory");
}

}  // namespace

FusionOutcome fuse_scene(
    const std::vector<SeedEntity>& seeds, const SceneMeta& meta,
    const ReliabilityLedger& ledger,
    const std::map<std::string, std::vector<std::string>>& agent_lineage,
    const FusionConfig& config) {
  FusionOutcome outcome;
  outcome.summary.scene_id = meta.scene_id;
  outcome.summary.timestamp_us = meta.timestamp_us;
  outcome.summary.ego_state.position_bev = Eigen::Vector2d::Zero();
  outcome.summary.ego_state.speed_mps = meta.ego_speed_mps;

  // Worst gate category per agent this scene; only multi-source residuals
  // count, a lone observation has nothing to disagree with.
  std::map<std::string, double> worst_score;
  auto note_score = [&](const std::string& agent, double s) {
    auto it = worst_score.find(agent);
    if (it == worst_score.end() || s < it->second) worst_score[agent] = s;
  };

  std::vector<FusedEntity> entities;
  std::vector<Json> traces;
  for (const auto& seed : seeds) {
    if (seed.observations.empty()) {
      throw InternalError("fuse_scene: seed without 3D observations");
    }
    FusedEntity entity;
    Json trace;

    // --- position ---
    std::vector<ContinuousObs> pos_obs;
    for (const auto& o : seed.observations) {
      ContinuousObs c;
      c.source_key = to_string(o.agent);
      c.agent = o.agent;
      c.value = o.detection.center_ego.head<2>();
      c.cov = o.detection.position_cov
                  ? Eigen::MatrixXd(*o.detection.position_cov)
                  : Eigen::MatrixXd(config.default_variance(o.agent,
                                                            Attribute::kPosition) *
                                    Eigen::Matrix2d::Identity());
      c.confidence = o.detection.confidence;
      pos_obs.push_back(std::move(c));
    }
    ContinuousResult pos = fuse_attribute(pos_obs, Attribute::kPosition, ledger,
                                          agent_lineage, config);
    entity.position_bev = pos.estimate.mean;
    entity.position_cov = pos.estimate.cov;
    entity.lineage["position"] = pos.lineage;
    trace["position"] = pos.trace;
    double max_pos_gate = 0.0;
    if (pos_obs.size() >= 2) {
      for (std::size_t k = 0; k < pos.gate_statistics.size(); ++k) {
        note_score(pos.gate_sources[k], score_for(pos.gate_categories[k]));
        max_pos_gate = std::max(max_pos_gate, pos.gate_statistics[k]);
      }
    }
    if (max_pos_gate > stats::chi2_quantile(2, config.gate_pass_p)) {
      entity.ambiguity_flags.insert("geometry_ambiguous");
    }

    // --- size (radar carries no usable extent; prior zero excludes it) ---
    std::vector<ContinuousObs> size_obs;
    for (const auto& o : seed.observations) {
      if (config.modality_prior(o.agent, Attribute::kSize) <= 0.0) continue;
      ContinuousObs c;
      c.source_key = to_string(o.agent);
      c.agent = o.agent;
      c.value = o.detection.size;
      c.cov = config.default_variance(o.agent, Attribute::kSize) *
              Eigen::Matrix3d::Identity();
      c.confidence = o.detection.confidence;
      size_obs.push_back(std::move(c));
    }
    if (!size_obs.empty()) {
      ContinuousResult size_r = fuse_attribute(size_obs, Attribute::kSize, ledger,
                                               agent_lineage, config);
      entity.size = size_r.estimate.mean;
      entity.lineage["size"] = size_r.lineage;
      trace["size"] = size_r.trace;
    } else {
      // Raw carry-over from the most confident observation.
      const SourceObservation* best = &seed.observations.front();
      for (const auto& o : seed.observations) {
        if (o.detection.confidence > best->detection.confidence) best = &o;
      }
      entity.size = best->detection.size;
      AttributeLineage l;
      l.sources = {to_string(best->agent)};
      l.rule = "raw_carryover";
      l.fallback = true;
      l.values[to_string(best->agent)] = vecxd_to_json(best->detection.size);
      entity.lineage["size"] = l;
    }

    // --- heading (unit-vector weighted mean keeps the wrap safe) ---
    {
      std::vector<const SourceObservation*> heading_sources;
      for (const auto& o : seed.observations) {
        if (config.modality_prior(o.agent, Attribute::kHeading) > 0.0) {
          heading_sources.push_back(&o);
        }
      }
      if (!heading_sources.empty()) {
        double mx = 0.0, my = 0.0;
        for (const auto* o : heading_sources) {
          mx += std::cos(o->detection.heading_rad);
          my += std::sin(o->detection.heading_rad);
        }
        const double ref = std::atan2(my, mx);
        const double sigma_sq =
            config.default_variance(AgentKind::kLidar, Attribute::kHeading);
        std::vector<WeightInputs> inputs;
        std::vector<double> gates;
        for (const auto* o : heading_sources) {
          const double diff = angle_diff(o->detection.heading_rad, ref);
          const double g =
              heading_sources.size() >= 2 ? diff * diff / sigma_sq : 0.0;
          gates.push_back(g);
          WeightInputs w;
          w.modality_prior =
              config.modality_prior(o->agent, Attribute::kHeading);
          w.reliability = ledger.get(o->agent);
          w.confidence = o->detection.confidence;
          w.uncertainty = 1.0 / (1.0 + sigma_sq);
          w.consistency = residual_gate(g, 1, config) == GateCategory::kVeto
                              ? 0.0
                              : std::exp(-g);
          inputs.push_back(w);
        }
        WeightResult wr = compute_weights(inputs);
        AttributeLineage l;
        l.rule = "unit_vector_weighted_mean";
        bool fallback = false;
        double fx = 0.0, fy = 0.0;
        if (wr.degenerate) {
          std::size_t best = 0;
          for (std::size_t k = 1; k < heading_sources.size(); ++k) {
            if (heading_sources[k]->detection.confidence >
                heading_sources[best]->detection.confidence) {
              best = k;
            }
          }
          fx = std::cos(heading_sources[best]->detection.heading_rad);
          fy = std::sin(heading_sources[best]->detection.heading_rad);
          fallback = true;
        } else {
          for (std::size_t k = 0; k < heading_sources.size(); ++k) {
            fx += wr.weights[k] * std::cos(heading_sources[k]->detection.heading_rad);
            fy += wr.weights[k] * std::sin(heading_sources[k]->detection.heading_rad);
          }
          if (std::hypot(fx, fy) < 1e-12) {
            // Antipodal cancellation; keep the highest-weight source.
            std::size_t best = 0;
            for (std::size_t k = 1; k < wr.weights.size(); ++k) {
              if (wr.weights[k] > wr.weights[best]) best = k;
            }
            fx = std::cos(heading_sources[best]->detection.heading_rad);
            fy = std::sin(heading_sources[best]->detection.heading_rad);
            fallback = true;
          }
        }
        entity.heading_rad = wrap_angle(std::atan2(fy, fx));
        l.fallback = fallback;
        for (const auto* o : heading_sources) {
          l.sources.push_back(to_string(o->agent));
          l.values[to_string(o->agent)] = o->detection.heading_rad;
        }
        entity.lineage["heading"] = l;
      } else {
        const SourceObservation& first = seed.observations.front();
        entity.heading_rad = wrap_angle(first.detection.heading_rad);
        AttributeLineage l;
        l.sources = {to_string(first.agent)};
        l.rule = "raw_carryover";
        l.fallback = true;
        l.values[to_string(first.agent)] = first.detection.heading_rad;
        entity.lineage["heading"] = l;
      }
    }

    // --- velocity ---
    {
      std::vector<ContinuousObs> full_obs;   // sources measuring both axes
      const SourceObservation* radar_obs = nullptr;
      for (const auto& o : seed.observations) {
        if (!o.detection.velocity_bev) continue;
        if (o.agent == AgentKind::kRadar) {
          radar_obs = &o;
          continue;
        }
        ContinuousObs c;
        c.source_key = to_string(o.agent);
        c.agent = o.agent;
        c.value = *o.detection.velocity_bev;
        c.cov = o.detection.velocity_cov
                    ? Eigen::MatrixXd(*o.detection.velocity_cov)
                    : Eigen::MatrixXd(config.default_variance(o.agent,
                                                              Attribute::kVelocity) *
                                      Eigen::Matrix2d::Identity());
        c.confidence = o.detection.confidence;
        full_obs.push_back(std::move(c));
      }
      if (!full_obs.empty()) {
        ContinuousResult vel = fuse_attribute(full_obs, Attribute::kVelocity,
                                              ledger, agent_lineage, config);
        AttributeLineage l = vel.lineage;
        if (radar_obs) {
          // The radar vector is a line-of-sight reconstruction; it only
          // cross-checks the radial component and never shifts the estimate.
          const Eigen::Vector2d v_radar = *radar_obs->detection.velocity_bev;
          const double speed = v_radar.norm();
          Eigen::Vector2d los = Eigen::Vector2d::UnitX();
          if (speed > 1e-9) {
            los = v_radar / speed;
          } else if (radar_obs->detection.center_ego.head<2>().norm() > 1e-9) {
            los = radar_obs->detection.center_ego.head<2>().normalized();
          }
          const double radial_fused =
              Eigen::Vector2d(vel.estimate.mean).dot(los);
          l.values["radar"] = vecxd_to_json(v_radar);
          l.values["radar_radial_residual_mps"] = speed - radial_fused;
          l.rule += "+radial_check";
        }
        entity.velocity_bev = Eigen::Vector2d(vel.estimate.mean);
        entity.velocity_cov = Eigen::Matrix2d(vel.estimate.cov);
        entity.lineage["velocity"] = l;
        trace["velocity"] = vel.trace;
      } else if (radar_obs) {
        entity.velocity_bev = *radar_obs->detection.velocity_bev;
        entity.velocity_cov =
            radar_obs->detection.velocity_cov
                ? *radar_obs->detection.velocity_cov
                : Eigen::Matrix2d(config.default_variance(AgentKind::kRadar,
                                                          Attribute::kVelocity) *
                                  Eigen::Matrix2d::Identity());
        AttributeLineage l;
        l.sources = {"radar"};
        l.rule = "radar_los_projection";
        l.values["radar"] = vecxd_to_json(*radar_obs->detection.velocity_bev);
        entity.lineage["velocity"] = l;
      } else {
        entity.ambiguity_flags.insert("velocity_skipped");
      }
    }

    // --- class ---
    {
      struct ClassEvidence {
        std::string source_key;
        AgentKind agent;
        std::map<std::string, double> probs;
        double confidence;
      };
      std::vector<ClassEvidence> evidence;
      for (const auto& o : seed.observations) {
        evidence.push_back({to_string(o.agent), o.agent,
                            o.detection.class_probs, o.detection.confidence});
      }
      for (const auto& cam : seed.camera_evidence) {
        evidence.push_back({"camera:" + cam.camera_id, AgentKind::kCamera,
                            cam.detection.class_probs, cam.detection.confidence});
      }
      std::vector<WeightInputs> inputs;
      for (const auto& e : evidence) {
        WeightInputs w;
        w.modality_prior = config.modality_prior(e.agent, Attribute::kClass);
        w.reliability = ledger.get(e.agent);
        w.confidence = e.confidence;
        w.uncertainty = 1.0;  // categorical evidence carries no covariance
        w.consistency = 1.0;  // disagreement is settled by the vote itself
        inputs.push_back(w);
      }
      WeightResult wr = compute_weights(inputs);
      AttributeLineage l;
      l.rule = "weighted_vote";
      if (wr.degenerate) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < evidence.size(); ++k) {
          if (evidence[k].confidence > evidence[best].confidence) best = k;
        }
        wr.weights.assign(evidence.size(), 0.0);
        wr.weights[best] = 1.0;
        l.fallback = true;
        entity.ambiguity_flags.insert("class_ambiguous");
      }
      std::vector<std::map<std::string, double>> dists;
      for (const auto& e : evidence) dists.push_back(e.probs);
      auto [winner, confidence] = fuse_categorical(dists, wr.weights);
      entity.type = winner;
      entity.class_confidence = confidence;
      if (confidence < config.tau_class) {
        entity.ambiguity_flags.insert("class_ambiguous");
      }

      // Conflict bookkeeping considers sources whose class evidence is
      // load-bearing (prior at least 0.5); the radar's near-uniform
      // distribution would otherwise fabricate disagreements.
      std::set<std::string> labels;
      for (const auto& e : evidence) {
        const std::string label = argmax_class(e.probs);
        l.values[e.source_key] = label;
        if (config.modality_prior(e.agent, Attribute::kClass) >= 0.5) {
          labels.insert(label);
        }
        l.sources.push_back(e.source_key);
      }
      entity.conflict_resolved = labels.size() >= 2;
      entity.lineage["class"] = l;

      // Camera frame score: agreement of its label with the fused class.
      for (const auto& e : evidence) {
        if (e.agent != AgentKind::kCamera) continue;
        note_score("camera", argmax_class(e.probs) == winner ? 1.0 : 0.5);
      }

      Json tc;
      tc["rule"] = l.rule;
      Json ts = Json::array();
      Json tw = Json::array();
      for (std::size_t k = 0; k < evidence.size(); ++k) {
        ts.push_back(evidence[k].source_key);
        tw.push_back(wr.weights[k]);
      }
      tc["sources"] = ts;
      tc["weights"] = tw;
      tc["winner"] = winner;
      tc["confidence"] = confidence;
      trace["class"] = tc;
    }

    // --- semantics, sources, single-source flag ---
    {
      std::set<std::string> attrs;
      for (const auto& cam : seed.camera_evidence) {
        attrs.insert(cam.detection.semantic_attributes.begin(),
                     cam.detection.semantic_attributes.end());
      }
      entity.semantic_attributes.assign(attrs.begin(), attrs.end());

      std::set<std::string> sources;
      for (const auto& o : seed.observations) sources.insert(to_string(o.agent));
      if (!seed.camera_evidence.empty()) sources.insert("camera");
      entity.sources.assign(sources.begin(), sources.end());
      if (seed.observations.size() + seed.camera_evidence.size() == 1) {
        entity.ambiguity_flags.insert("single_source");
      }
    }

    entities.push_back(std::move(entity));
    traces.push_back(std::move(trace));
  }

  // Canonical ordering over fused values, then dense renumbering.
  std::vector<std::size_t> order(entities.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const FusedEntity& ea = entities[a];
    const FusedEntity& eb = entities[b];
    if (ea.position_bev.x() != eb.position_bev.x()) {
      return ea.position_bev.x() < eb.position_bev.x();
    }
    if (ea.position_bev.y() != eb.position_bev.y()) {
      return ea.position_bev.y() < eb.position_bev.y();
    }
    return ea.type < eb.type;
  });
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    FusedEntity& e = entities[order[rank]];
    e.entity_id = make_entity_id(static_cast<int>(rank) + 1);
    Json t = traces[order[rank]];
    t["entity_id"] = e.entity_id;
    outcome.trace.push_back(t);
    outcome.summary.entities.push_back(e);
  }
  std::sort(outcome.summary.entities.begin(), outcome.summary.entities.end(),
            [](const FusedEntity& a, const FusedEntity& b) {
              return entity_id_number(a.entity_id) < entity_id_number(b.entity_id);
            });

  refresh_entity_types(outcome.summary);
  validate(outcome.summary, "summary");
  outcome.frame_scores = worst_score;
  return outcome;
}

}  // namespace bevcoord
