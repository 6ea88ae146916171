#include "resdecomp/dynamics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "resdecomp/analysis.hpp"
#include "resdecomp/parallel.hpp"

namespace resdecomp {

namespace {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;
using RowVec = Eigen::Matrix<float, 1, Eigen::Dynamic>;

ConstMap view(const Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

MutMap view(Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

Eigen::Map<const RowVec> view(const Vector& v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }
Eigen::Map<RowVec> view(Vector& v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }

struct NormCache {
    Mat x;               // input
    Eigen::VectorXf s;   // 1 / rms per row
    Mat y;               // output
};

void rms_forward(const Mat& x, const Vector& gamma, float eps, NormCache& out) {
    const auto d = static_cast<float>(x.cols());
    out.x = x;
    out.s.resize(x.rows());
    out.y.resize(x.rows(), x.cols());
    const auto g = view(gamma);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        const float ms = x.row(t).squaredNorm() / d;
        out.s(t) = 1.0f / std::sqrt(ms + eps);
        out.y.row(t) = (x.row(t) * out.s(t)).cwiseProduct(g);
    }
}

// Adds the input gradient into dx and the gain gradient into dgamma.
void rms_backward(const NormCache& c, const Vector& gamma, const Mat& dy, Mat& dx, Vector& dgamma) {
    const auto d = static_cast<float>(c.x.cols());
    const auto g = view(gamma);
    auto dg = view(dgamma);
    for (Eigen::Index t = 0; t < c.x.rows(); ++t) {
        const float s = c.s(t);
        dg += dy.row(t).cwiseProduct(c.x.row(t) * s);
        const RowVec dxh = dy.row(t).cwiseProduct(g);
        const float proj = dxh.dot(c.x.row(t));
        dx.row(t) += dxh * s - c.x.row(t) * (s * s * s * proj / d);
    }
}

struct LayerCache {
    NormCache ln1;
    Mat q, k, v, o;
    std::vector<Mat> probs;  // per head, T x T
    NormCache ln2;
    Mat up, hidden;
};

}  // namespace

TransformerWeights zeros_like(const TransformerWeights& weights) {
    TransformerWeights z = weights;
    for_each_tensor(z, [](const std::string&, std::size_t, std::size_t, std::vector<float>& data) {
        std::fill(data.begin(), data.end(), 0.0f);
    });
    return z;
}

double sequence_loss(const TransformerWeights& weights, const TrainingSequence& seq, double scale,
                     TransformerWeights* grad) {
    const ModelConfig& cfg = weights.config;
    const auto T = static_cast<Eigen::Index>(seq.tokens.size());
    if (T == 0) throw InputError("sequence_loss: empty sequence");
    if (T > cfg.max_seq) throw LengthError("sequence_loss: sequence longer than max_seq");
    if (seq.target_positions.size() != seq.targets.size()) {
        throw InputError("sequence_loss: one target per target position required");
    }
    const Eigen::Index d = cfg.d_model;
    const Eigen::Index dh = cfg.d_head;
    const float scale_qk = 1.0f / std::sqrt(static_cast<float>(dh));

    Mat x(T, d);
    const auto tok_emb = view(weights.token_embedding);
    const auto pos_emb = view(weights.position_embedding);
    for (Eigen::Index t = 0; t < T; ++t) {
        const TokenId id = seq.tokens[static_cast<std::size_t>(t)];
        if (id < 0 || id >= cfg.vocab) throw InputError("sequence_loss: token outside vocabulary");
        x.row(t) = tok_emb.row(id) + pos_emb.row(t);
    }

    std::vector<LayerCache> caches(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
        const LayerWeights& lw = weights.layers[static_cast<std::size_t>(l)];
        LayerCache& c = caches[static_cast<std::size_t>(l)];
        rms_forward(x, lw.ln1_gamma, cfg.eps, c.ln1);
        c.q.noalias() = c.ln1.y * view(lw.w_q).transpose();
        c.k.noalias() = c.ln1.y * view(lw.w_k).transpose();
        c.v.noalias() = c.ln1.y * view(lw.w_v).transpose();
        c.o.setZero(T, d);
        c.probs.resize(static_cast<std::size_t>(cfg.heads));
        for (int h = 0; h < cfg.heads; ++h) {
            const Eigen::Index off = h * dh;
            Mat s = c.q.middleCols(off, dh) * c.k.middleCols(off, dh).transpose() * scale_qk;
            for (Eigen::Index t = 0; t < T; ++t) {
                const float m = s.row(t).head(t + 1).maxCoeff();
                float z = 0.0f;
                for (Eigen::Index u = 0; u <= t; ++u) {
                    s(t, u) = std::exp(s(t, u) - m);
                    z += s(t, u);
                }
                s.row(t).head(t + 1) /= z;
                s.row(t).tail(T - t - 1).setZero();
            }
            c.o.middleCols(off, dh).noalias() = s * c.v.middleCols(off, dh);
            c.probs[static_cast<std::size_t>(h)] = std::move(s);
        }
        x.noalias() += c.o * view(lw.w_o).transpose();
        rms_forward(x, lw.ln2_gamma, cfg.eps, c.ln2);
        c.up.noalias() = c.ln2.y * view(lw.w_up).transpose();
        c.hidden = c.up.cwiseMax(0.0f).cwiseAbs2();
        x.noalias() += c.hidden * view(lw.w_down).transpose();
    }
    NormCache fin;
    rms_forward(x, weights.final_gamma, cfg.eps, fin);

    const auto n_targets = static_cast<Eigen::Index>(seq.targets.size());
    if (n_targets == 0) return 0.0;
    Mat f_sel(n_targets, d);
    for (Eigen::Index i = 0; i < n_targets; ++i) {
        const int pos = seq.target_positions[static_cast<std::size_t>(i)];
        if (pos < 0 || pos >= T) throw IndexError("sequence_loss: target position out of range");
        f_sel.row(i) = fin.y.row(pos);
    }
    const auto u = view(weights.output_embedding);
    const Mat logits = f_sel * u.transpose();

    double loss = 0.0;
    Mat dlogits(n_targets, cfg.vocab);
    for (Eigen::Index i = 0; i < n_targets; ++i) {
        const TokenId target = seq.targets[static_cast<std::size_t>(i)];
        if (target < 0 || target >= cfg.vocab) throw InputError("sequence_loss: target outside vocabulary");
        const float m = logits.row(i).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j < cfg.vocab; ++j) z += std::exp(static_cast<double>(logits(i, j) - m));
        loss += std::log(z) - static_cast<double>(logits(i, target) - m);
        for (Eigen::Index j = 0; j < cfg.vocab; ++j) {
            const double p = std::exp(static_cast<double>(logits(i, j) - m)) / z;
            dlogits(i, j) = static_cast<float>(scale * (p - (j == target ? 1.0 : 0.0)));
        }
    }
    loss *= scale;
    if (grad == nullptr) return loss;

    view(grad->output_embedding).noalias() += dlogits.transpose() * f_sel;
    Mat dfin = Mat::Zero(T, d);
    const Mat df_sel = dlogits * u;
    for (Eigen::Index i = 0; i < n_targets; ++i) {
        dfin.row(seq.target_positions[static_cast<std::size_t>(i)]) += df_sel.row(i);
    }
    Mat dx = Mat::Zero(T, d);
    rms_backward(fin, weights.final_gamma, dfin, dx, grad->final_gamma);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerWeights& lw = weights.layers[static_cast<std::size_t>(l)];
        LayerWeights& gw = grad->layers[static_cast<std::size_t>(l)];
        const LayerCache& c = caches[static_cast<std::size_t>(l)];

        // MLP: dx flows straight through the residual and into the block.
        view(gw.w_down).noalias() += dx.transpose() * c.hidden;
        Mat dup = dx * view(lw.w_down);
        dup = dup.cwiseProduct(c.up.cwiseMax(0.0f) * 2.0f);
        view(gw.w_up).noalias() += dup.transpose() * c.ln2.y;
        const Mat db = dup * view(lw.w_up);
        rms_backward(c.ln2, lw.ln2_gamma, db, dx, gw.ln2_gamma);

        // Attention
        view(gw.w_o).noalias() += dx.transpose() * c.o;
        const Mat d_o = dx * view(lw.w_o);
        Mat dq(T, d), dk(T, d), dv(T, d);
        for (int h = 0; h < cfg.heads; ++h) {
            const Eigen::Index off = h * dh;
            const Mat& p = c.probs[static_cast<std::size_t>(h)];
            const Mat dp = d_o.middleCols(off, dh) * c.v.middleCols(off, dh).transpose();
            dv.middleCols(off, dh).noalias() = p.transpose() * d_o.middleCols(off, dh);
            Mat ds = p.cwiseProduct(dp);
            const Eigen::VectorXf rowdot = ds.rowwise().sum();
            ds -= p.cwiseProduct(rowdot.replicate(1, T));
            ds *= scale_qk;
            dq.middleCols(off, dh).noalias() = ds * c.k.middleCols(off, dh);
            dk.middleCols(off, dh).noalias() = ds.transpose() * c.q.middleCols(off, dh);
        }
        view(gw.w_q).noalias() += dq.transpose() * c.ln1.y;
        view(gw.w_k).noalias() += dk.transpose() * c.ln1.y;
        view(gw.w_v).noalias() += dv.transpose() * c.ln1.y;
        Mat da = dq * view(lw.w_q);
        da.noalias() += dk * view(lw.w_k);
        da.noalias() += dv * view(lw.w_v);
        rms_backward(c.ln1, lw.ln1_gamma, da, dx, gw.ln1_gamma);
    }

    auto d_tok = view(grad->token_embedding);
    auto d_pos = view(grad->position_embedding);
    for (Eigen::Index t = 0; t < T; ++t) {
        d_tok.row(seq.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
        d_pos.row(t) += dx.row(t);
    }
    return loss;
}

namespace {

struct AdamState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
};

template <class F>
void zip_tensors(TransformerWeights& a, TransformerWeights& b, F&& fn) {
    std::vector<std::vector<float>*> bs;
    for_each_tensor(b, [&](const std::string&, std::size_t, std::size_t, std::vector<float>& d) { bs.push_back(&d); });
    std::size_t i = 0;
    for_each_tensor(a, [&](const std::string&, std::size_t, std::size_t, std::vector<float>& d) {
        fn(i, d, *bs[i]);
        ++i;
    });
}

}  // namespace

std::vector<Checkpoint> train_toy_lm(const ModelConfig& config, const Task& task, int steps,
                                     int checkpoint_every, std::uint64_t seed, const ToyTrainOptions& options) {
    if (checkpoint_every < 1 || steps < checkpoint_every) {
        throw InputError("train_toy_lm: need steps >= checkpoint_every >= 1");
    }
    if (options.batch_size < 1 || options.min_demos < 1 || options.max_demos < options.min_demos) {
        throw InputError("train_toy_lm: batch size and max demos must be positive");
    }
    if (task.layout.vocab_size > config.vocab) {
        throw InputError("train_toy_lm: task vocabulary (" + std::to_string(task.layout.vocab_size) +
                         ") exceeds model vocabulary (" + std::to_string(config.vocab) + ")");
    }
    TransformerWeights weights = init_random(config, seed);
    Rng data_rng(substream_seed(seed, "train"));

    AdamState adam;
    for_each_tensor(weights, [&](const std::string&, std::size_t, std::size_t, const std::vector<float>& d) {
        adam.m.emplace_back(d.size(), 0.0f);
        adam.v.emplace_back(d.size(), 0.0f);
    });
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    std::vector<Checkpoint> checkpoints;
    for (int step = 0; step <= steps; ++step) {
        std::vector<TrainingSequence> batch;
        std::size_t n_targets = 0;
        for (int b = 0; b < options.batch_size; ++b) {
            batch.push_back(sample_training_sequence(task, config.max_seq, options.min_demos, options.max_demos, data_rng));
            n_targets += batch.back().targets.size();
        }
        const double scale = n_targets == 0 ? 0.0 : 1.0 / static_cast<double>(n_targets);
        TransformerWeights grad = zeros_like(weights);
        double loss = 0.0;
        for (const auto& seq : batch) loss += sequence_loss(weights, seq, scale, &grad);

        double norm_sq = 0.0;
        for_each_tensor(grad, [&](const std::string&, std::size_t, std::size_t, const std::vector<float>& d) {
            for (float g : d) norm_sq += static_cast<double>(g) * g;
        });
        if (!std::isfinite(loss) || !std::isfinite(norm_sq)) {
            throw TrainingDiverged("train_toy_lm: non-finite loss at step " + std::to_string(step),
                                   std::move(checkpoints));
        }
        if (step % checkpoint_every == 0 || step == steps) {
            checkpoints.push_back({step, weights, loss});
        }
        if (step == steps) break;

        const double norm = std::sqrt(norm_sq);
        const double clip = norm > options.grad_clip ? options.grad_clip / norm : 1.0;
        const double warm = std::min(1.0, static_cast<double>(step + 1) / std::max(1, options.warmup_steps));
        const double lr = options.learning_rate * warm;
        const double bc1 = 1.0 - std::pow(beta1, step + 1);
        const double bc2 = 1.0 - std::pow(beta2, step + 1);
        zip_tensors(weights, grad, [&](std::size_t i, std::vector<float>& w, std::vector<float>& g) {
            auto& m = adam.m[i];
            auto& v = adam.v[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = g[k] * clip;
                m[k] = static_cast<float>(beta1 * m[k] + (1.0 - beta1) * gk);
                v[k] = static_cast<float>(beta2 * v[k] + (1.0 - beta2) * gk * gk);
                const double mhat = m[k] / bc1;
                const double vhat = v[k] / bc2;
                w[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + adam_eps));
            }
        });
    }
    return checkpoints;
}

MeanSd mean_sd(const std::vector<double>& values) {
    if (values.empty()) throw InputError("mean_sd: no values");
    MeanSd out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

DynamicsCurve sweep_dynamics(const std::vector<Checkpoint>& checkpoints, const Task& task,
                             const std::vector<std::uint64_t>& prompt_seeds,
                             const std::vector<Template>& templates, const SweepOptions& options) {
    if (checkpoints.empty()) throw InputError("sweep_dynamics: no checkpoints");
    if (prompt_seeds.empty() || templates.empty()) {
        throw InputError("sweep_dynamics: need at least one prompt seed and one template");
    }
    const auto test_size = std::min<std::size_t>(static_cast<std::size_t>(options.test_size), task.examples.size());
    const std::span<const LabeledExample> test(task.examples.data(), test_size);

    std::vector<PromptSpec> runs;
    for (std::uint64_t s : prompt_seeds) {
        const auto demos = sample_demonstrations(task.pool, task.n_labels, options.k_prime, DemoMode::balanced(), s);
        for (const Template& t : templates) runs.push_back({demos, t});
    }
    const std::size_t n_runs = runs.size();
    const std::size_t n_ckpt = checkpoints.size();

    std::vector<ComponentReport> reports(n_ckpt * n_runs);
    const EvaluationOptions eval{options.include_x0, 1, 1.0};
    parallel_for(reports.size(), options.threads, [&](std::size_t i) {
        reports[i] = evaluate_components(checkpoints[i / n_runs].weights, runs[i % n_runs], test, eval);
    });

    DynamicsCurve curve;
    curve.runs = static_cast<int>(n_runs);
    std::vector<std::size_t> tracked(n_runs);
    for (std::size_t r = 0; r < n_runs; ++r) {
        const ComponentReport& last = reports[(n_ckpt - 1) * n_runs + r];
        tracked[r] = last.oracle_t1;
        curve.final_top1.push_back(last.top1().id.name());
    }
    for (std::size_t c = 0; c < n_ckpt; ++c) {
        std::vector<double> full, t1, b1, last_t1;
        for (std::size_t r = 0; r < n_runs; ++r) {
            const ComponentReport& rep = reports[c * n_runs + r];
            full.push_back(rep.full_accuracy);
            t1.push_back(rep.top1().accuracy);
            b1.push_back(rep.bottom1().accuracy);
            last_t1.push_back(rep.components.at(tracked[r]).accuracy);
        }
        curve.points.push_back({checkpoints[c].step, mean_sd(full), mean_sd(t1), mean_sd(b1), mean_sd(last_t1)});
    }
    return curve;
}

namespace {

nlohmann::json mean_sd_json(const MeanSd& m) {
    nlohmann::json j = {{"mean", m.mean}};
    if (m.sd) j["sd"] = *m.sd;
    return j;
}

}  // namespace

std::string curve_to_csv(const DynamicsCurve& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "step,metric,mean,sd\n";
    for (const auto& p : curve.points) {
        const std::pair<const char*, const MeanSd*> rows[] = {
            {"full", &p.full}, {"t1", &p.t1}, {"b1", &p.b1}, {"last_t1", &p.last_t1}};
        for (const auto& [name, m] : rows) {
            out << p.step << ',' << name << ',' << m->mean << ',';
            if (m->sd) out << *m->sd;
            out << '\n';
        }
    }
    return out.str();
}

nlohmann::json curve_to_json(const DynamicsCurve& curve) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : curve.points) {
        points.push_back({{"step", p.step},
                          {"full", mean_sd_json(p.full)},
                          {"t1", mean_sd_json(p.t1)},
                          {"b1", mean_sd_json(p.b1)},
                          {"last_t1", mean_sd_json(p.last_t1)}});
    }
    return {{"runs", curve.runs}, {"final_top1", curve.final_top1}, {"points", points}};
}

}  // namespace resdecomp
