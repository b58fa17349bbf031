#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dxrag/reward.hpp"

namespace dxrag {

/// G sampled completions for one prompt with rewards and per-token
/// log-probabilities. Full per-token distributions are optional; when present
/// the KL term is exact, otherwise the logp_cur - logp_ref estimator is used.
struct GroupBatch {
    std::string prompt_id;
    std::vector<std::vector<int>> completions;
    std::vector<double> rewards;
    std::vector<std::vector<double>> logp_cur;
    std::vector<std::vector<double>> logp_old;
    std::vector<std::vector<double>> logp_ref;
    std::vector<std::vector<std::vector<double>>> dist_cur;
    std::vector<std::vector<std::vector<double>>> dist_ref;
};

/// (Rwd_i - mean) / population std; all zeros when the spread collapses
/// (std < 1e-12). Throws when fewer than two rewards are given.
std::vector<double> group_advantages(const std::vector<double>& rewards);

/// Exact KL(p || q) = sum_a p(a) log(p(a)/q(a)), probabilities floored at 1e-12.
double kl_exact(const std::vector<double>& p, const std::vector<double>& q);

struct KlSeries {
    std::vector<double> values;
    bool estimator = false;  // true when the logp_cur - logp_ref fallback was used
};

/// Per-token exact KL from aligned full distributions.
KlSeries kl_term(const std::vector<std::vector<double>>& dist_cur,
                 const std::vector<std::vector<double>>& dist_ref);

/// Per-token sampled estimator: logp_cur - logp_ref.
KlSeries kl_estimate(const std::vector<double>& logp_cur,
                     const std::vector<double>& logp_ref);

/// Scalar loss: mean over completions of the token-mean of
/// -A_i * logp_cur + beta * KL, with the group advantage broadcast to every
/// token of its completion.
double grpo_objective(const GroupBatch& batch, double beta);

/// Categorical policy over a finite vocabulary of canned transcripts.
struct ToyPolicy {
    std::vector<double> logits;
    double temperature = 1.0;

    std::vector<double> probs() const;  // softmax(logits / temperature)
    std::size_t sample(std::mt19937_64& rng) const;
};

/// Loss for one sampled group under the toy policy (single-token completions).
double toy_loss(const ToyPolicy& policy, const std::vector<std::size_t>& samples,
                const std::vector<double>& advantages,
                const std::vector<double>& ref_probs, double beta);

/// Analytic gradient of toy_loss with respect to the logits.
std::vector<double> toy_loss_gradient(const ToyPolicy& policy,
                                      const std::vector<std::size_t>& samples,
                                      const std::vector<double>& advantages,
                                      const std::vector<double>& ref_probs, double beta);

struct TrainIteration {
    int iteration = 0;
    int stage = 0;
    RewardWeights weights;
    double mean_reward = 0.0;
    double loss = 0.0;
    double kl = 0.0;
    double argmax_prob = 0.0;
    std::size_t argmax_index = 0;
};

struct TrainTrace {
    std::vector<TrainIteration> iterations;
    bool diverged = false;
};

struct ToyTrainConfig {
    int iters = 200;
    int group_size = 8;
    double beta = 0.01;
    double lr = 0.5;
    std::uint64_t seed = 0;
    bool use_schedule = false;  // false: fixed_weights for every iteration
    StageSchedule schedule = StageSchedule::standard();
    RewardWeights fixed_weights = stage_weights(4);
};

/// reward_fn(vocabulary index, stage weights) -> combined reward.
using ElementRewardFn = std::function<double(std::size_t, const RewardWeights&)>;

/// Gradient descent on the GRPO loss over the toy policy's logits. The KL
/// reference is the policy's distribution at entry.
TrainTrace train_toy(ToyPolicy& policy, std::size_t vocab_size,
                     const ElementRewardFn& reward_fn, const ToyTrainConfig& config);

std::string trace_to_csv(const TrainTrace& trace);
std::string trace_to_json(const TrainTrace& trace);

}  // namespace dxrag
