#include "dxrag/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dxrag {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kStdGuard = 1e-12;

}  // namespace

std::vector<double> group_advantages(const std::vector<double>& rewards) {
    if (rewards.size() < 2) {
        throw std::invalid_argument("group_advantages: need at least two rewards");
    }
    double g = static_cast<double>(rewards.size());
    double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / g;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= g;  // population variance
    double std_dev = std::sqrt(var);
    std::vector<double> advantages(rewards.size(), 0.0);
    if (std_dev < kStdGuard) return advantages;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        advantages[i] = (rewards[i] - mean) / std_dev;
    }
    return advantages;
}

double kl_exact(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_exact: size mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pi = std::max(p[i], kProbFloor);
        double qi = std::max(q[i], kProbFloor);
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

KlSeries kl_term(const std::vector<std::vector<double>>& dist_cur,
                 const std::vector<std::vector<double>>& dist_ref) {
    if (dist_cur.size() != dist_ref.size()) {
        throw std::invalid_argument("kl_term: token count mismatch");
    }
    KlSeries out;
    out.values.reserve(dist_cur.size());
    for (std::size_t t = 0; t < dist_cur.size(); ++t) {
        out.values.push_back(kl_exact(dist_cur[t], dist_ref[t]));
    }
    return out;
}

KlSeries kl_estimate(const std::vector<double>& logp_cur,
                     const std::vector<double>& logp_ref) {
    if (logp_cur.size() != logp_ref.size()) {
        throw std::invalid_argument("kl_estimate: token count mismatch");
    }
    KlSeries out;
    out.estimator = true;
    out.values.reserve(logp_cur.size());
    for (std::size_t t = 0; t < logp_cur.size(); ++t) {
        out.values.push_back(logp_cur[t] - logp_ref[t]);
    }
    return out;
}

double grpo_objective(const GroupBatch& batch, double beta) {
    std::size_t g = batch.logp_cur.size();
    if (g < 2) throw std::invalid_argument("grpo_objective: need a group of at least two");
    if (batch.rewards.size() != g) {
        throw std::invalid_argument("grpo_objective: rewards/logp size mismatch");
    }
    auto advantages = group_advantages(batch.rewards);

    double total = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        const auto& logp = batch.logp_cur[i];
        if (logp.empty()) continue;
        KlSeries kl;
        if (beta != 0.0) {
            if (i < batch.dist_cur.size() && i < batch.dist_ref.size() &&
                !batch.dist_cur[i].empty() && batch.dist_cur[i].size() == logp.size() &&
                batch.dist_ref[i].size() == logp.size()) {
                kl = kl_term(batch.dist_cur[i], batch.dist_ref[i]);
            } else if (i < batch.logp_ref.size() && batch.logp_ref[i].size() == logp.size()) {
                kl = kl_estimate(logp, batch.logp_ref[i]);
            } else {
                kl.values.assign(logp.size(), 0.0);
            }
        } else {
            kl.values.assign(logp.size(), 0.0);
        }
        double seq = 0.0;
        for (std::size_t t = 0; t < logp.size(); ++t) {
            seq += -advantages[i] * logp[t] + beta * kl.values[t];
        }
        total += seq / static_cast<double>(logp.size());
    }
    return total / static_cast<double>(g);
}

std::vector<double> ToyPolicy::probs() const {
    std::vector<double> out(logits.size());
    double t = temperature > 0.0 ? temperature : 1.0;
    double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - max_logit) / t);
        sum += out[i];
    }
    for (auto& p : out) p /= sum;
    return out;
}

std::size_t ToyPolicy::sample(std::mt19937_64& rng) const {
    auto p = probs();
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double u = uniform(rng);
    double cum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        cum += p[i];
        if (u < cum) return i;
    }
    return p.size() - 1;
}

double toy_loss(const ToyPolicy& policy, const std::vector<std::size_t>& samples,
                const std::vector<double>& advantages, const std::vector<double>& ref_probs,
                double beta) {
    auto p = policy.probs();
    double kl = kl_exact(p, ref_probs);
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double pi = std::max(p[samples[i]], kProbFloor);
        total += -advantages[i] * std::log(pi) + beta * kl;
    }
    return total / static_cast<double>(samples.size());
}

std::vector<double> toy_loss_gradient(const ToyPolicy& policy,
                                      const std::vector<std::size_t>& samples,
                                      const std::vector<double>& advantages,
                                      const std::vector<double>& ref_probs, double beta) {
    auto p = policy.probs();
    double t = policy.temperature > 0.0 ? policy.temperature : 1.0;
    double kl = kl_exact(p, ref_probs);
    double g = static_cast<double>(samples.size());
    std::vector<double> grad(p.size(), 0.0);

    // d/dz_j of -A_i log p(a_i) = -A_i (delta(j, a_i) - p_j) / t
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            double delta = samples[i] == j ? 1.0 : 0.0;
            grad[j] += -advantages[i] * (delta - p[j]) / t;
        }
    }
    // d/dz_j of KL(p || ref) = p_j (log(p_j / ref_j) - KL) / t
    for (std::size_t j = 0; j < p.size(); ++j) {
        double pj = std::max(p[j], kProbFloor);
        double qj = std::max(ref_probs[j], kProbFloor);
        grad[j] += beta * g * (pj * (std::log(pj / qj) - kl) / t);
    }
    for (auto& v : grad) v /= g;
    return grad;
}

TrainTrace train_toy(ToyPolicy& policy, std::size_t vocab_size,
                     const ElementRewardFn& reward_fn, const ToyTrainConfig& config) {
    if (policy.logits.size() != vocab_size) {
        throw std::invalid_argument("train_toy: logits/vocab size mismatch");
    }
    if (config.group_size < 2) throw std::invalid_argument("train_toy: group_size >= 2");

    TrainTrace trace;
    std::mt19937_64 rng(config.seed);
    std::vector<double> ref_probs = policy.probs();

    for (int iter = 0; iter < config.iters; ++iter) {
        int stage = 1;
        if (config.use_schedule) {
            int per_stage = std::max(1, config.iters / 4);
            stage = std::min(4, iter / per_stage + 1);
        } else {
            stage = 4;
        }
        RewardWeights weights =
            config.use_schedule ? config.schedule.stages[stage - 1] : config.fixed_weights;

        std::vector<std::size_t> samples(config.group_size);
        std::vector<double> rewards(config.group_size);
        for (int i = 0; i < config.group_size; ++i) {
            samples[i] = policy.sample(rng);
            rewards[i] = reward_fn(samples[i], weights);
        }
        double mean_reward =
            std::accumulate(rewards.begin(), rewards.end(), 0.0) / rewards.size();
        if (std::isnan(mean_reward)) {
            trace.diverged = true;
            break;
        }

        auto advantages = group_advantages(rewards);
        double loss = toy_loss(policy, samples, advantages, ref_probs, config.beta);
        auto grad = toy_loss_gradient(policy, samples, advantages, ref_probs, config.beta);
        for (std::size_t j = 0; j < policy.logits.size(); ++j) {
            policy.logits[j] -= config.lr * grad[j];
        }

        auto probs = policy.probs();
        std::size_t argmax =
            std::distance(probs.begin(), std::max_element(probs.begin(), probs.end()));
        TrainIteration rec;
        rec.iteration = iter;
        rec.stage = stage;
        rec.weights = weights;
        rec.mean_reward = mean_reward;
        rec.loss = loss;
        rec.kl = kl_exact(probs, ref_probs);
        rec.argmax_prob = probs[argmax];
        rec.argmax_index = argmax;
        trace.iterations.push_back(rec);
    }
    return trace;
}

std::string trace_to_csv(const TrainTrace& trace) {
    std::ostringstream out;
    out << "iteration,stage,w_s,w_m,w_d,mean_reward,loss,kl,argmax_index,argmax_prob\n";
    for (const auto& it : trace.iterations) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%d,%d,%.4f,%.4f,%.4f,%.10f,%.10f,%.10f,%zu,%.10f\n",
                      it.iteration, it.stage, it.weights.w_s, it.weights.w_m, it.weights.w_d,
                      it.mean_reward, it.loss, it.kl, it.argmax_index, it.argmax_prob);
        out << buf;
    }
    return out.str();
}

std::string trace_to_json(const TrainTrace& trace) {
    nlohmann::json j;
    j["diverged"] = trace.diverged;
    j["iterations"] = nlohmann::json::array();
    for (const auto& it : trace.iterations) {
        nlohmann::json rec;
        rec["iteration"] = it.iteration;
        rec["stage"] = it.stage;
        rec["weights"] = {{"w_s", it.weights.w_s},
                          {"w_m", it.weights.w_m},
                          {"w_d", it.weights.w_d}};
        rec["mean_reward"] = it.mean_reward;
        rec["loss"] = it.loss;
        rec["kl"] = it.kl;
        rec["argmax_index"] = it.argmax_index;
        rec["argmax_prob"] = it.argmax_prob;
        j["iterations"].push_back(rec);
    }
    return j.dump(2);
}

}  // namespace dxrag
