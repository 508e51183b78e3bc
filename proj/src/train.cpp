#include "socratic/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "socratic/errors.hpp"

namespace socratic {

namespace {

double softplus(double x) {
    // log(1 + e^x) without overflow; softplus(0) is exactly ln 2.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_compatible(const PolicyParams& theta, const PolicyParams& ref) {
    if (theta.bucket_count != ref.bucket_count || !(theta.vocab == ref.vocab)) {
        throw ContractError("dpo: theta and ref must share vocabulary and bucket count");
    }
}

// Adds coeff * (softmax(row) - onehot(target)) to the gradient rows along the
// question path.
void accumulate_path(const PolicyParams& params, std::string_view prompt,
                     std::span<const int32_t> question, double coeff, GradTable& grad) {
    int32_t v = params.vocab.size();
    int32_t prev = Vocab::kBos;
    for (int32_t token : question) {
        int32_t bucket = context_bucket(prompt, prev, params.bucket_count);
        std::vector<double> probs = softmax_row(params, bucket);
        double* row = grad.data() + static_cast<size_t>(bucket) * v;
        for (int32_t i = 0; i < v; ++i) row[i] += coeff * probs[i];
        row[token] -= coeff;
        prev = token;
    }
}

struct EncodedPair {
    std::vector<int32_t> chosen;
    std::vector<int32_t> rejected;
};

EncodedPair encode_pair(const Vocab& vocab, const PreferencePair& pair) {
    return EncodedPair{vocab.encode_question(pair.chosen), vocab.encode_question(pair.rejected)};
}

double pair_margin(const PolicyParams& theta, const PolicyParams& ref, const PreferencePair& pair,
                   const EncodedPair& enc, double beta) {
    double chosen_ratio = sequence_logprob(theta, pair.prompt, enc.chosen) -
                          sequence_logprob(ref, pair.prompt, enc.chosen);
    double rejected_ratio = sequence_logprob(theta, pair.prompt, enc.rejected) -
                            sequence_logprob(ref, pair.prompt, enc.rejected);
    return beta * (chosen_ratio - rejected_ratio);
}

void apply_update(PolicyParams& params, const GradTable& grad, double learning_rate) {
    for (size_t i = 0; i < params.logits.size(); ++i) {
        params.logits[i] =
            static_cast<float>(static_cast<double>(params.logits[i]) - learning_rate * grad[i]);
    }
}

}  // namespace

double sft_loss(const PolicyParams& params, std::span<const TrainingExample> examples) {
    if (examples.empty()) throw ContractError("sft_loss: examples must be nonempty");
    double total = 0.0;
    for (const TrainingExample& ex : examples) {
        total -= sequence_logprob(params, ex.prompt, params.vocab.encode_question(ex.target));
    }
    return total / static_cast<double>(examples.size());
}

GradTable sft_grad(const PolicyParams& params, std::span<const TrainingExample> examples) {
    if (examples.empty()) throw ContractError("sft_grad: examples must be nonempty");
    GradTable grad(params.logits.size(), 0.0);
    double inv_n = 1.0 / static_cast<double>(examples.size());
    for (const TrainingExample& ex : examples) {
        accumulate_path(params, ex.prompt, params.vocab.encode_question(ex.target), inv_n, grad);
    }
    return grad;
}

double dpo_loss(const PolicyParams& theta, const PolicyParams& ref,
                std::span<const PreferencePair> pairs, double beta) {
    if (pairs.empty()) throw ContractError("dpo_loss: pairs must be nonempty");
    check_compatible(theta, ref);
    double total = 0.0;
    for (const PreferencePair& pair : pairs) {
        EncodedPair enc = encode_pair(theta.vocab, pair);
        total += softplus(-pair_margin(theta, ref, pair, enc, beta));
    }
    return total / static_cast<double>(pairs.size());
}

GradTable dpo_grad(const PolicyParams& theta, const PolicyParams& ref,
                   std::span<const PreferencePair> pairs, double beta) {
    if (pairs.empty()) throw ContractError("dpo_grad: pairs must be nonempty");
    check_compatible(theta, ref);
    GradTable grad(theta.logits.size(), 0.0);
    double inv_n = 1.0 / static_cast<double>(pairs.size());
    for (const PreferencePair& pair : pairs) {
        EncodedPair enc = encode_pair(theta.vocab, pair);
        double margin = pair_margin(theta, ref, pair, enc, beta);
        double coeff = sigmoid(-margin) * beta * inv_n;
        accumulate_path(theta, pair.prompt, enc.chosen, coeff, grad);
        accumulate_path(theta, pair.prompt, enc.rejected, -coeff, grad);
    }
    return grad;
}

double dpo_margin_mean(const PolicyParams& theta, const PolicyParams& ref,
                       std::span<const PreferencePair> pairs, double beta) {
    if (pairs.empty()) throw ContractError("dpo_margin_mean: pairs must be nonempty");
    check_compatible(theta, ref);
    double total = 0.0;
    for (const PreferencePair& pair : pairs) {
        EncodedPair enc = encode_pair(theta.vocab, pair);
        total += pair_margin(theta, ref, pair, enc, beta);
    }
    return total / static_cast<double>(pairs.size());
}

namespace {

// Shared descent driver: full-batch does one step per epoch; minibatch
// reshuffles each epoch with the seeded generator.
template <typename Item, typename LossFn, typename GradFn, typename MarginFn>
PolicyParams descend(PolicyParams params, std::span<const Item> items, const TrainConfig& config,
                     const StepCallback& on_step, LossFn loss_fn, GradFn grad_fn,
                     MarginFn margin_fn) {
    if (items.empty()) throw ContractError("training needs a nonempty dataset");
    if (config.learning_rate < 0) throw ContractError("learning_rate must be >= 0");
    if (config.epochs < 1) throw ContractError("epochs must be >= 1");

    std::mt19937_64 rng(config.seed);
    std::vector<size_t> order(items.size());
    std::iota(order.begin(), order.end(), size_t{0});

    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.gradient_mode == GradientMode::FullBatch) {
            double loss = loss_fn(params, items);
            if (!std::isfinite(loss)) {
                throw Error("non-finite loss at step " + std::to_string(step) + ": " +
                            std::to_string(loss));
            }
            if (on_step) on_step(LossReport{step, loss, margin_fn(params, items)});
            apply_update(params, grad_fn(params, items), config.learning_rate);
            ++step;
        } else {
            if (config.batch_size < 1) throw ContractError("batch_size must be >= 1");
            std::shuffle(order.begin(), order.end(), rng);
            for (size_t begin = 0; begin < order.size();
                 begin += static_cast<size_t>(config.batch_size)) {
                size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
                std::vector<Item> batch;
                batch.reserve(end - begin);
                for (size_t i = begin; i < end; ++i) batch.push_back(items[order[i]]);
                std::span<const Item> batch_view(batch);
                double loss = loss_fn(params, batch_view);
                if (!std::isfinite(loss)) {
                    throw Error("non-finite loss at step " + std::to_string(step) + ": " +
                                std::to_string(loss));
                }
                if (on_step) on_step(LossReport{step, loss, margin_fn(params, batch_view)});
                apply_update(params, grad_fn(params, batch_view), config.learning_rate);
                ++step;
            }
        }
    }
    return params;
}

}  // namespace

PolicyParams train_sft(std::span<const TrainingExample> examples, const TrainConfig& config,
                       int32_t bucket_count, const StepCallback& on_step) {
    std::vector<std::string> targets;
    targets.reserve(examples.size());
    for (const TrainingExample& ex : examples) targets.push_back(ex.target);
    PolicyParams params = PolicyParams::zeros(Vocab::build(targets), bucket_count);
    return descend<TrainingExample>(
        std::move(params), examples, config, on_step,
        [](const PolicyParams& p, std::span<const TrainingExample> xs) { return sft_loss(p, xs); },
        [](const PolicyParams& p, std::span<const TrainingExample> xs) { return sft_grad(p, xs); },
        [](const PolicyParams&, std::span<const TrainingExample>) { return 0.0; });
}

PolicyParams train_dpo(std::span<const PreferencePair> pairs, const PolicyParams& ref,
                       const TrainConfig& config, const StepCallback& on_step) {
    PolicyParams theta = ref;
    return descend<PreferencePair>(
        std::move(theta), pairs, config, on_step,
        [&ref, &config](const PolicyParams& p, std::span<const PreferencePair> xs) {
            return dpo_loss(p, ref, xs, config.beta);
        },
        [&ref, &config](const PolicyParams& p, std::span<const PreferencePair> xs) {
            return dpo_grad(p, ref, xs, config.beta);
        },
        [&ref, &config](const PolicyParams& p, std::span<const PreferencePair> xs) {
            return dpo_margin_mean(p, ref, xs, config.beta);
        });
}

}  // namespace socratic
