#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bevcoord/association.hpp"
#include "bevcoord/types.hpp"

namespace bevcoord {

// Attribute families a fused entity carries. Class is categorical; the rest
// are continuous.
enum class Attribute { kPosition, kVelocity, kSize, kHeading, kClass };

std::string to_string(Attribute attr);

struct FusionConfig {
  double beta = 0.9;        // reliability EMA coefficient
  double tau_class = 0.6;   // winning confidence below this flags the class
  double initial_reliability = 0.8;
  double gate_pass_p = 0.95;        // residual gate: pass at or below
  double gate_suspicious_p = 0.99;  // suspicious at or below, veto beyond
  double ci_omega = 0.5;            // covariance intersection default blend
  double ci_omega_biased = 0.7;     // blend toward the lower-residual source
  double ci_residual_ratio = 2.0;   // bias kicks in past this residual ratio
  double regularization = 1e-9;     // added to covariances before inversion

  // Default variance (diagonal) substituted when a source declares no
  // covariance block for an attribute.
  double default_variance(AgentKind agent, Attribute attr) const;

  // Modality prior m_k for an agent on an attribute; zero excludes the
  // combination (radar contributes no size or heading).
  double modality_prior(AgentKind agent, Attribute attr) const;
};

// Per-agent reliability state r_k, updated once per scene by an exponential
// moving average r <- beta*r + (1-beta)*s with s in {1, 0.5, 0}.
class ReliabilityLedger {
 public:
  ReliabilityLedger() = default;
  ReliabilityLedger(double initial, double beta)
      : initial_(initial), beta_(beta) {}

  double get(AgentKind agent) const;
  void update(AgentKind agent, double score);

  Json to_json() const;
  static ReliabilityLedger from_json(const Json& j, const std::string& path);

 private:
  double initial_ = 0.8;
  double beta_ = 0.9;
  std::map<std::string, double> values_;
};

// Per-source inputs to the weight product w~ = m * r * q * u * eta.
struct WeightInputs {
  double modality_prior = 1.0;   // m
  double reliability = 1.0;      // r
  double confidence = 1.0;       // q
  double uncertainty = 1.0;      // u = 1 / (1 + trace(cov))
  double consistency = 1.0;      // eta, zero when the residual gate vetoes
};

struct WeightResult {
  std::vector<double> weights;  // normalized; all zero when degenerate
  bool degenerate = false;      // every raw product collapsed to zero
};

// Multiplies and normalizes the weight inputs. A degenerate result leaves
// the zeros untouched; the caller applies its fallback policy.
WeightResult compute_weights(const std::vector<WeightInputs>& inputs);

// Consistency factor eta = exp(-(x - x_ref)^T cov_ref^-1 (x - x_ref)).
double consistency_factor(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref,
                          const Eigen::MatrixXd& cov_ref);

struct GaussianEstimate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Weighted information-filter combination:
//   cov = (sum_k w_k cov_k^-1)^-1,  mean = cov * sum_k w_k cov_k^-1 x_k.
// With equal weights and identical per-source covariance the fused
// covariance equals that covariance; the weights shape the blend, they do
// not accumulate evidence. Throws InternalError if the information sum is
// singular after regularization.
GaussianEstimate fuse_continuous(const std::vector<Eigen::VectorXd>& values,
                                 const std::vector<Eigen::MatrixXd>& covariances,
                                 const std::vector<double>& weights,
                                 double regularization = 1e-9);

// Covariance intersection for two estimates with unknown cross-correlation:
//   cov^-1 = omega * cov_a^-1 + (1 - omega) * cov_b^-1.
GaussianEstimate covariance_intersection(const GaussianEstimate& a,
                                         const GaussianEstimate& b,
                                         double omega,
                                         double regularization = 1e-9);

// Weighted categorical vote Conf(c) = sum_k w_k P_k(c). Returns the winning
// class (vocabulary order breaks ties) and its confidence.
std::pair<std::string, double> fuse_categorical(
    const std::vector<std::map<std::string, double>>& distributions,
    const std::vector<double>& weights);

// Residual gate category for one observation against a reference.
enum class GateCategory { kPass, kSuspicious, kVeto };

GateCategory residual_gate(double statistic, int dof, const FusionConfig& config);

struct SceneMeta {
  std::string scene_id;
  std::int64_t timestamp_us = 0;
  double ego_speed_mps = 0.0;
};

struct FusionOutcome {
  SceneSummary summary;
  // Frame score per agent that produced at least one gated residual this
  // scene; drives the reliability ledger update.
  std::map<std::string, double> frame_scores;
  Json trace = Json::array();  // per-entity fusion detail for --trace runs
};

// Fuses associated seeds into a scene summary. Reliability values are read
// from the ledger as-is; the caller applies the returned frame scores
// afterwards so every entity in one scene sees the same r_k.
FusionOutcome fuse_scene(
    const std::vector<SeedEntity>& seeds, const SceneMeta& meta,
    const ReliabilityLedger& ledger,
    const std::map<std::string, std::vector<std::string>>& agent_lineage,
    const FusionConfig& config);

}  // namespace bevcoord
