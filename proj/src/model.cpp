#include "matav/model.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace matav {

Ablation ablation_from_string(const std::string& s) {
    if (s == "none" || s == "full") return Ablation::none;
    if (s == "no_mamba") return Ablation::no_mamba;
    if (s == "no_mec") return Ablation::no_mec;
    throw std::invalid_argument("unknown ablation: " + s);
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::none: return "full";
        case Ablation::no_mamba: return "no_mamba";
        case Ablation::no_mec: return "no_mec";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (d_model < 1 || d_attn < 1 || d_state < 1 || proj_dim < 1)
        throw std::invalid_argument("ModelConfig: dimensions must be positive");
    if (n_ssm_blocks < 1) throw std::invalid_argument("ModelConfig: n_ssm_blocks < 1");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
    if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr < 0");
    if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay < 0");
}

struct MatavModel::Parts {
    AlignmentState align;
    FusionStack fusion;
    std::vector<SsmBlock> blocks;
    Matrix w_clf, b_clf;
};

MatavModel::Parts MatavModel::make_parts(std::size_t t_dim, std::size_t a_dim, std::size_t v_dim,
                                         std::size_t n_classes, const ModelConfig& cfg,
                                         const MecConfig& mec, uint64_t seed) {
    cfg.validate();
    mec.validate();
    // Single seeded stream; initialization order is part of the determinism
    // contract: heads, fusion, SSM blocks, classifier.
    Rng rng(seed);
    AlignmentState align(t_dim, a_dim, v_dim, cfg.proj_dim, mec, rng);
    FusionStack fusion =
        FusionStack::init(t_dim + a_dim + v_dim, cfg.d_model, cfg.d_attn, cfg.n_attn_layers, rng);
    std::vector<SsmBlock> blocks;
    for (std::size_t k = 0; k < cfg.n_ssm_blocks; ++k)
        blocks.push_back(SsmBlock::init(cfg.d_model, cfg.d_state, rng));
    Matrix w_clf(cfg.d_model, n_classes);
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    for (std::size_t i = 0; i < w_clf.size(); ++i) w_clf.data()[i] = rng.gaussian() * s;
    Matrix b_clf(1, n_classes);
    return {std::move(align), std::move(fusion), std::move(blocks), std::move(w_clf),
            std::move(b_clf)};
}

MatavModel::MatavModel(std::size_t t_dim_, std::size_t a_dim_, std::size_t v_dim_,
                       std::size_t n_classes_, const ModelConfig& cfg_, Parts&& parts)
    : t_dim(t_dim_),
      a_dim(a_dim_),
      v_dim(v_dim_),
      n_classes(n_classes_),
      cfg(cfg_),
      align(std::move(parts.align)),
      fusion(std::move(parts.fusion)),
      ssm_blocks(std::move(parts.blocks)),
      w_clf(std::move(parts.w_clf)),
      b_clf(std::move(parts.b_clf)) {}

MatavModel::MatavModel(std::size_t t_dim_, std::size_t a_dim_, std::size_t v_dim_,
                       std::size_t n_classes_, const ModelConfig& cfg_, const MecConfig& mec,
                       uint64_t seed)
    : MatavModel(t_dim_, a_dim_, v_dim_, n_classes_, cfg_,
                 make_parts(t_dim_, a_dim_, v_dim_, n_classes_, cfg_, mec, seed)) {}

std::vector<std::pair<std::string, Matrix*>> MatavModel::parameters() {
    std::vector<std::pair<std::string, Matrix*>> p;
    p.emplace_back("heads.w_t", &align.online.w_t);
    p.emplace_back("heads.b_t", &align.online.b_t);
    p.emplace_back("heads.w_a", &align.online.w_a);
    p.emplace_back("heads.b_a", &align.online.b_a);
    p.emplace_back("heads.w_v", &align.online.w_v);
    p.emplace_back("heads.b_v", &align.online.b_v);
    p.emplace_back("fusion.w_in", &fusion.w_in);
    for (std::size_t i = 0; i < fusion.layers.size(); ++i) {
        const std::string prefix = "fusion.layer" + std::to_string(i) + ".";
        p.emplace_back(prefix + "w_q", &fusion.layers[i].w_q);
        p.emplace_back(prefix + "w_k", &fusion.layers[i].w_k);
        p.emplace_back(prefix + "w_v", &fusion.layers[i].w_v);
        p.emplace_back(prefix + "w_o", &fusion.layers[i].w_o);
    }
    p.emplace_back("fusion.w_f", &fusion.w_f);
    p.emplace_back("fusion.fc_w", &fusion.fc_w);
    p.emplace_back("fusion.fc_b", &fusion.fc_b);
    for (std::size_t k = 0; k < ssm_blocks.size(); ++k) {
        const std::string prefix = "ssm" + std::to_string(k) + ".";
        p.emplace_back(prefix + "a_log", &ssm_blocks[k].a_log);
        p.emplace_back(prefix + "w_delta", &ssm_blocks[k].w_delta);
        p.emplace_back(prefix + "b_delta", &ssm_blocks[k].b_delta);
        p.emplace_back(prefix + "w_b", &ssm_blocks[k].w_b);
        p.emplace_back(prefix + "w_c", &ssm_blocks[k].w_c);
        p.emplace_back(prefix + "w_z", &ssm_blocks[k].w_z);
        p.emplace_back(prefix + "w_out", &ssm_blocks[k].w_out);
    }
    p.emplace_back("clf.w", &w_clf);
    p.emplace_back("clf.b", &b_clf);
    return p;
}

std::vector<std::pair<std::string, const Matrix*>> MatavModel::parameters() const {
    auto mut = const_cast<MatavModel*>(this)->parameters();
    std::vector<std::pair<std::string, const Matrix*>> p;
    p.reserve(mut.size());
    for (auto& [name, m] : mut) p.emplace_back(name, m);
    return p;
}

ModelVars bind_model(Tape& tape, const MatavModel& model) {
    ModelVars v;
    auto params = model.parameters();
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (auto& [name, m] : params) vars.push_back(tape.leaf(*m));
    v.ordered = vars;
    std::size_t i = 0;
    v.heads.w_t = vars[i++];
    v.heads.b_t = vars[i++];
    v.heads.w_a = vars[i++];
    v.heads.b_a = vars[i++];
    v.heads.w_v = vars[i++];
    v.heads.b_v = vars[i++];
    v.fusion.w_in = vars[i++];
    v.fusion.layers.resize(model.fusion.layers.size());
    for (auto& l : v.fusion.layers) {
        l.w_q = vars[i++];
        l.w_k = vars[i++];
        l.w_v = vars[i++];
        l.w_o = vars[i++];
    }
    v.fusion.w_f = vars[i++];
    v.fusion.fc_w = vars[i++];
    v.fusion.fc_b = vars[i++];
    v.ssm_blocks.resize(model.ssm_blocks.size());
    for (auto& s : v.ssm_blocks) {
        s.a_log = vars[i++];
        s.w_delta = vars[i++];
        s.b_delta = vars[i++];
        s.w_b = vars[i++];
        s.w_c = vars[i++];
        s.w_z = vars[i++];
        s.w_out = vars[i++];
    }
    v.w_clf = vars[i++];
    v.b_clf = vars[i++];
    return v;
}

Matrix features_concat(const Dialogue& d) {
    const std::size_t n = d.length();
    const std::size_t td = d.utterances[0].t.size(), ad = d.utterances[0].a.size(),
                      vd = d.utterances[0].v.size();
    Matrix x(n, td + ad + vd);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = x.row(i);
        for (float f : d.utterances[i].t) *row++ = f;
        for (float f : d.utterances[i].a) *row++ = f;
        for (float f : d.utterances[i].v) *row++ = f;
    }
    return x;
}

namespace {

Matrix stack_modality(const std::vector<const Dialogue*>& ds,
                      const std::vector<float> UtteranceFeatures::*member) {
    std::size_t total = 0;
    for (const Dialogue* d : ds) total += d->length();
    const std::size_t dim = (ds[0]->utterances[0].*member).size();
    Matrix x(total, dim);
    std::size_t at = 0;
    for (const Dialogue* d : ds)
        for (const auto& u : d->utterances) {
            const auto& vec = u.*member;
            for (std::size_t j = 0; j < dim; ++j) x(at, j) = vec[j];
            ++at;
        }
    return x;
}

}  // namespace

Matrix features_t(const std::vector<const Dialogue*>& ds) {
    return stack_modality(ds, &UtteranceFeatures::t);
}
Matrix features_a(const std::vector<const Dialogue*>& ds) {
    return stack_modality(ds, &UtteranceFeatures::a);
}
Matrix features_v(const std::vector<const Dialogue*>& ds) {
    return stack_modality(ds, &UtteranceFeatures::v);
}

Var forward_dialogue(Tape& tape, const ModelVars& vars, const MatavModel& model, Var x_concat,
                     Ablation ablation) {
    Var z = fuse_dialogue(tape, vars.fusion, x_concat);
    if (ablation != Ablation::no_mamba)
        for (const auto& blk : vars.ssm_blocks) z = ssm_block_forward(tape, blk, z);
    return tape.add_row_broadcast(tape.matmul(z, vars.w_clf), vars.b_clf);
}

Matrix forward_dialogue(const MatavModel& model, const Dialogue& d, Ablation ablation) {
    Matrix z = fuse_dialogue(model.fusion, features_concat(d));
    if (ablation != Ablation::no_mamba)
        for (const auto& blk : model.ssm_blocks) z = ssm_block_forward(blk, z);
    Matrix logits = mm_nn(z, model.w_clf);
    for (std::size_t i = 0; i < logits.rows(); ++i)
        for (std::size_t j = 0; j < logits.cols(); ++j) logits(i, j) += model.b_clf(0, j);
    return logits;
}

int predict(const Matrix& logits_row) {
    if (logits_row.rows() != 1 || logits_row.cols() < 2)
        throw std::invalid_argument("predict: expects a 1 x K row with K >= 2");
    int best = 0;
    for (std::size_t j = 1; j < logits_row.cols(); ++j)
        if (logits_row(0, j) > logits_row(0, best)) best = static_cast<int>(j);
    return best;  // ties break to the lowest index
}

BatchLoss total_loss(Tape& tape, const ModelVars& vars, MatavModel& model,
                     const std::vector<const Dialogue*>& batch, const TrainConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
    BatchLoss out;
    std::vector<Var> f_parts;
    for (const Dialogue* d : batch) {
        Var x = tape.constant(features_concat(*d));
        Var z = fuse_dialogue(tape, vars.fusion, x);
        if (cfg.ablation != Ablation::no_mamba)
            for (const auto& blk : vars.ssm_blocks) z = ssm_block_forward(tape, blk, z);
        f_parts.push_back(z);
        out.labels.insert(out.labels.end(), d->labels.begin(), d->labels.end());
    }
    Var f_all = tape.concat_rows(f_parts);
    out.logits = tape.add_row_broadcast(tape.matmul(f_all, vars.w_clf), vars.b_clf);
    out.ce = tape.cross_entropy(out.logits, out.labels);
    const double lambda = model.align.cfg.lambda;
    const bool mec_on = cfg.ablation != Ablation::no_mec && lambda > 0.0;
    if (mec_on) {
        const Matrix xt = features_t(batch), xa = features_a(batch), xv = features_v(batch);
        Var t_hat = project_on_tape(tape, tape.constant(xt), vars.heads.w_t, vars.heads.b_t);
        Var a_hat = project_on_tape(tape, tape.constant(xa), vars.heads.w_a, vars.heads.b_a);
        Var v_hat = project_on_tape(tape, tape.constant(xv), vars.heads.w_v, vars.heads.b_v);
        out.mom_t = model.align.momentum.project_t(xt);
        out.mom_a = model.align.momentum.project_a(xa);
        out.mom_v = model.align.momentum.project_v(xv);
        out.mec = mec_loss(tape, t_hat, a_hat, v_hat, out.mom_t, out.mom_a, out.mom_v,
                           model.align.queue_t, model.align.queue_a, model.align.queue_v,
                           model.align.cfg);
        out.total = tape.add(out.ce, tape.scale(out.mec, lambda));
    } else {
        out.total = out.ce;
    }
    return out;
}

namespace {

void collect_truth_and_preds(const MatavModel& model, const DialogueSet& set, Ablation ablation,
                             std::vector<int>& y_true, std::vector<int>& y_pred) {
    for (const auto& d : set.dialogues) {
        Matrix logits = forward_dialogue(model, d, ablation);
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            Matrix row(1, logits.cols());
            for (std::size_t j = 0; j < logits.cols(); ++j) row(0, j) = logits(i, j);
            y_pred.push_back(predict(row));
            y_true.push_back(d.labels[i]);
        }
    }
}

}  // namespace

MetricsReport evaluate(const MatavModel& model, const DialogueSet& set, Ablation ablation) {
    std::vector<int> y_true, y_pred;
    collect_truth_and_preds(model, set, ablation, y_true, y_pred);
    return weighted_f1(y_true, y_pred, model.n_classes);
}

TrainReport train(MatavModel& model, const DialogueSet& train_set, const DialogueSet* dev_set,
                  const TrainConfig& cfg) {
    cfg.validate();
    train_set.validate();
    if (train_set.t_dim != model.t_dim || train_set.a_dim != model.a_dim ||
        train_set.v_dim != model.v_dim)
        throw std::invalid_argument("train: dataset feature dims do not match model");
    if (train_set.label_set.size() != model.n_classes)
        throw std::invalid_argument("train: label set size does not match model");

    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.weight_decay = cfg.weight_decay;
    acfg.use_sgd = cfg.use_sgd;
    AdamState adam(acfg);

    Rng shuffle_rng(cfg.seed ^ 0x9d2c5680a7b94b1dULL);
    std::vector<std::size_t> order(train_set.dialogues.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the dedicated shuffle stream.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double ce_sum = 0.0, mec_sum = 0.0, total_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            std::vector<const Dialogue*> batch;
            for (std::size_t i = at; i < std::min(at + cfg.batch_size, order.size()); ++i)
                batch.push_back(&train_set.dialogues[order[i]]);

            Tape tape;
            ModelVars vars = bind_model(tape, model);
            BatchLoss loss = total_loss(tape, vars, model, batch, cfg);
            const double total_val = tape.value(loss.total)(0, 0);
            if (!std::isfinite(total_val))
                throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch) + ", step " +
                                         std::to_string(steps));
            tape.backward(loss.total);

            auto params = model.parameters();
            std::vector<Matrix*> ptrs;
            std::vector<Matrix> grads;
            ptrs.reserve(params.size());
            grads.reserve(params.size());
            for (std::size_t k = 0; k < params.size(); ++k) {
                ptrs.push_back(params[k].second);
                grads.push_back(tape.grad(vars.ordered[k]));
            }
            adam.step(ptrs, grads);

            if (loss.mec.valid()) {
                model.align.finish_step(loss.mom_t, loss.mom_a, loss.mom_v);
                mec_sum += tape.value(loss.mec)(0, 0);
            }
            ce_sum += tape.value(loss.ce)(0, 0);
            total_sum += total_val;
            ++steps;
        }
        report.ce_loss.push_back(ce_sum / static_cast<double>(steps));
        report.mec_loss.push_back(mec_sum / static_cast<double>(steps));
        report.total_loss.push_back(total_sum / static_cast<double>(steps));

        MetricsReport train_metrics = evaluate(model, train_set, cfg.ablation);
        report.train_accuracy.push_back(train_metrics.accuracy);
        report.train_wf1.push_back(train_metrics.weighted_f1);
        if (dev_set) {
            MetricsReport dev_metrics = evaluate(model, *dev_set, cfg.ablation);
            report.dev_accuracy.push_back(dev_metrics.accuracy);
            report.dev_wf1.push_back(dev_metrics.weighted_f1);
        }
    }
    report.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

SimilarityGap similarity_gap(const MatavModel& model, const DialogueSet& set) {
    std::vector<const Dialogue*> all;
    for (const auto& d : set.dialogues) all.push_back(&d);
    const Matrix xt = features_t(all), xa = features_a(all), xv = features_v(all);
    const Matrix t_hat = model.align.online.project_t(xt);
    const Matrix a_hat = model.align.online.project_a(xa);
    const Matrix v_hat = model.align.online.project_v(xv);
    const Matrix mt = model.align.momentum.project_t(xt);
    const Matrix ma = model.align.momentum.project_a(xa);
    const Matrix mv = model.align.momentum.project_v(xv);

    auto dot_rows = [](const Matrix& x, std::size_t i, const Matrix& y, std::size_t j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < x.cols(); ++k) acc += x(i, k) * y(j, k);
        return acc;
    };

    SimilarityGap g;
    const std::size_t n = t_hat.rows();
    double matched = 0.0, negative = 0.0;
    std::size_t n_neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        matched += dot_rows(t_hat, i, ma, i) + dot_rows(a_hat, i, mv, i) + dot_rows(t_hat, i, mv, i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            negative +=
                dot_rows(t_hat, i, ma, j) + dot_rows(a_hat, i, mv, j) + dot_rows(t_hat, i, mv, j);
            n_neg += 3;
        }
    }
    g.matched_mean = matched / (3.0 * static_cast<double>(n));
    g.negative_mean = negative / static_cast<double>(n_neg);
    return g;
}

std::vector<AblationRow> run_ablation_suite(const DialogueSet& train_set,
                                            const DialogueSet& eval_set, const ModelConfig& mcfg,
                                            const MecConfig& mec, const TrainConfig& tcfg,
                                            const std::vector<uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation_suite: need at least one seed");
    std::vector<AblationRow> rows;
    for (Ablation variant : {Ablation::none, Ablation::no_mamba, Ablation::no_mec}) {
        for (uint64_t seed : seeds) {
            MatavModel model(train_set.t_dim, train_set.a_dim, train_set.v_dim,
                             train_set.label_set.size(), mcfg, mec, seed);
            TrainConfig cfg = tcfg;
            cfg.seed = seed;
            cfg.ablation = variant;
            TrainReport rep = train(model, train_set, nullptr, cfg);
            MetricsReport metrics = evaluate(model, eval_set, variant);
            rows.push_back({to_string(variant), seed, metrics.weighted_f1, metrics.accuracy,
                            cfg.epochs, rep.wallclock_s});
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant,seed,wf1,accuracy,epochs,wallclock_s\n";
    os.precision(17);
    for (const auto& r : rows)
        os << r.variant << "," << r.seed << "," << r.wf1 << "," << r.accuracy << "," << r.epochs
           << "," << r.wallclock_s << "\n";
    return os.str();
}

namespace {

constexpr uint16_t kCheckpointVersion = 1;
const char kCheckpointMagic[4] = {'M', 'T', 'C', 'K'};

void ck_put_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void ck_put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void ck_put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint16_t ck_get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw std::runtime_error("checkpoint: truncated");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t ck_get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

double ck_get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::vector<std::pair<std::string, const Matrix*>> checkpoint_tensors(const MatavModel& model) {
    auto tensors = model.parameters();
    // Momentum heads ride along so an eval-time model matches training state.
    tensors.emplace_back("momentum.w_t", &model.align.momentum.w_t);
    tensors.emplace_back("momentum.b_t", &model.align.momentum.b_t);
    tensors.emplace_back("momentum.w_a", &model.align.momentum.w_a);
    tensors.emplace_back("momentum.b_a", &model.align.momentum.b_a);
    tensors.emplace_back("momentum.w_v", &model.align.momentum.w_v);
    tensors.emplace_back("momentum.b_v", &model.align.momentum.b_v);
    return tensors;
}

}  // namespace

void save_checkpoint(const MatavModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(kCheckpointMagic, 4);
    ck_put_u16(os, kCheckpointVersion);
    ck_put_u16(os, 0);
    for (std::size_t dim : {model.t_dim, model.a_dim, model.v_dim, model.n_classes,
                            model.cfg.d_model, model.cfg.d_attn, model.cfg.n_attn_layers,
                            model.cfg.d_state, model.cfg.n_ssm_blocks, model.cfg.proj_dim})
        ck_put_u32(os, static_cast<uint32_t>(dim));
    auto tensors = checkpoint_tensors(model);
    ck_put_u32(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        ck_put_u16(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        ck_put_u32(os, static_cast<uint32_t>(m->rows()));
        ck_put_u32(os, static_cast<uint32_t>(m->cols()));
        for (std::size_t i = 0; i < m->size(); ++i) ck_put_f64(os, m->data()[i]);
    }
    if (!os) throw std::runtime_error("write failure: " + path);
}

MatavModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    const uint16_t version = ck_get_u16(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    ck_get_u16(is);
    const std::size_t t_dim = ck_get_u32(is), a_dim = ck_get_u32(is), v_dim = ck_get_u32(is),
                      n_classes = ck_get_u32(is);
    ModelConfig cfg;
    cfg.d_model = ck_get_u32(is);
    cfg.d_attn = ck_get_u32(is);
    cfg.n_attn_layers = ck_get_u32(is);
    cfg.d_state = ck_get_u32(is);
    cfg.n_ssm_blocks = ck_get_u32(is);
    cfg.proj_dim = ck_get_u32(is);

    MatavModel model(t_dim, a_dim, v_dim, n_classes, cfg, MecConfig{}, 0);
    auto mut_tensors = model.parameters();
    std::vector<std::pair<std::string, Matrix*>> by_name = mut_tensors;
    by_name.emplace_back("momentum.w_t", &model.align.momentum.w_t);
    by_name.emplace_back("momentum.b_t", &model.align.momentum.b_t);
    by_name.emplace_back("momentum.w_a", &model.align.momentum.w_a);
    by_name.emplace_back("momentum.b_a", &model.align.momentum.b_a);
    by_name.emplace_back("momentum.w_v", &model.align.momentum.w_v);
    by_name.emplace_back("momentum.b_v", &model.align.momentum.b_v);

    const uint32_t n_tensors = ck_get_u32(is);
    std::size_t loaded = 0;
    for (uint32_t k = 0; k < n_tensors; ++k) {
        const uint16_t name_len = ck_get_u16(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated");
        const std::size_t rows = ck_get_u32(is), cols = ck_get_u32(is);
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = ck_get_f64(is);
        bool found = false;
        for (auto& [n, ptr] : by_name) {
            if (n == name) {
                if (ptr->rows() != rows || ptr->cols() != cols)
                    throw std::runtime_error("checkpoint: shape mismatch for " + name);
                *ptr = std::move(m);
                found = true;
                ++loaded;
                break;
            }
        }
        if (!found) throw std::runtime_error("checkpoint: unknown tensor " + name);
    }
    if (loaded != by_name.size())
        throw std::runtime_error("checkpoint: missing tensors");
    return model;
}

std::string TrainReport::to_json() const {
    nlohmann::json j;
    j["ce_loss"] = ce_loss;
    j["mec_loss"] = mec_loss;
    j["total_loss"] = total_loss;
    j["train_accuracy"] = train_accuracy;
    j["train_wf1"] = train_wf1;
    j["dev_accuracy"] = dev_accuracy;
    j["dev_wf1"] = dev_wf1;
    j["wallclock_s"] = wallclock_s;
    return j.dump(2);
}

}  // namespace matav
