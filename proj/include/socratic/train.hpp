#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "socratic/augment.hpp"
#include "socratic/corpus.hpp"
#include "socratic/tinylm.hpp"

namespace socratic {

enum class GradientMode { FullBatch, Minibatch };

struct TrainConfig {
    double learning_rate = 0.5;
    int epochs = 200;
    int batch_size = 8;     // minibatch mode only
    double beta = 0.1;      // preference-deviation coefficient (DPO)
    uint64_t seed = 0;
    GradientMode gradient_mode = GradientMode::FullBatch;
};

struct LossReport {
    int step = 0;
    double loss = 0.0;
    // Mean of beta * ((log pi_theta - log pi_ref)(chosen) -
    //                 (log pi_theta - log pi_ref)(rejected)); 0 for SFT.
    double margin_mean = 0.0;
};

using StepCallback = std::function<void(const LossReport&)>;

// Dense gradient, same shape as PolicyParams::logits, in double.
using GradTable = std::vector<double>;

// Mean negative sequence log-likelihood of the targets.
double sft_loss(const PolicyParams& params, std::span<const TrainingExample> examples);

// Exact gradient of sft_loss: (softmax - onehot) / N accumulated over every
// visited (bucket, target) step; untouched buckets stay zero.
GradTable sft_grad(const PolicyParams& params, std::span<const TrainingExample> examples);

// Mean of -log sigmoid(margin), computed through the stable softplus form.
double dpo_loss(const PolicyParams& theta, const PolicyParams& ref,
                std::span<const PreferencePair> pairs, double beta);

GradTable dpo_grad(const PolicyParams& theta, const PolicyParams& ref,
                   std::span<const PreferencePair> pairs, double beta);

double dpo_margin_mean(const PolicyParams& theta, const PolicyParams& ref,
                       std::span<const PreferencePair> pairs, double beta);

// SFT from zero-initialized logits over a vocabulary built from the example
// targets. Plain gradient descent; one LossReport per step (loss measured
// before the update).
PolicyParams train_sft(std::span<const TrainingExample> examples, const TrainConfig& config,
                       int32_t bucket_count = 4096, const StepCallback& on_step = {});

// DPO starting from a copy of the reference policy, which stays frozen.
PolicyParams train_dpo(std::span<const PreferencePair> pairs, const PolicyParams& ref,
                       const TrainConfig& config, const StepCallback& on_step = {});

}  // namespace socratic
