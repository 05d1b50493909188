#include "matav/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "matav/alignment.hpp"
#include "matav/fusion.hpp"
#include "matav/model.hpp"
#include "matav/rng.hpp"
#include "matav/ssm.hpp"
#include "matav/tape.hpp"

namespace matav {

namespace {

// Builds the scalar loss from leaves bound (in order) to the given tensors.
using BuildFn = std::function<Var(Tape&, const std::vector<Var>&)>;

double eval_loss(std::vector<Matrix>& params, const BuildFn& build) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const Matrix& p : params) leaves.push_back(tape.leaf(p));
    return tape.value(build(tape, leaves))(0, 0);
}

double check_params(std::vector<Matrix> params, const BuildFn& build,
                    const GradCheckOptions& opts, Rng& rng) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const Matrix& p : params) leaves.push_back(tape.leaf(p));
    Var loss = build(tape, leaves);
    tape.backward(loss);
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Var v : leaves) analytic.push_back(tape.grad(v));

    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const std::size_t n = params[k].size();
        const std::size_t samples = std::min(opts.samples_per_tensor, n);
        for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t idx =
                (samples == n) ? s : static_cast<std::size_t>(rng.below(n));
            const double orig = params[k].data()[idx];
            params[k].data()[idx] = orig + opts.h;
            const double fp = eval_loss(params, build);
            params[k].data()[idx] = orig - opts.h;
            const double fm = eval_loss(params, build);
            params[k].data()[idx] = orig;
            const double fd = (fp - fm) / (2.0 * opts.h);
            const double an = analytic[k].data()[idx];
            const double rel =
                std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-3});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double s = 0.5) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian() * s;
    return m;
}

double check_numeric(const GradCheckOptions& opts, Rng& rng) {
    // One composite touching every primitive, with shared intermediates so
    // gradient accumulation across multiple consumers is exercised too.
    std::vector<Matrix> params = {random_matrix(3, 4, rng), random_matrix(4, 5, rng),
                                  random_matrix(1, 5, rng)};
    const std::vector<int> labels = {1, 4, 0};
    BuildFn build = [labels](Tape& t, const std::vector<Var>& p) {
        Var h = t.add_row_broadcast(t.matmul(p[0], p[1]), p[2]);
        Var g = t.silu(h);
        Var sp = t.softplus(h);
        Var sm = t.softmax_rows(h);
        Var l2 = t.l2_normalize_rows(h);
        Var e = t.exp(t.scale(h, 0.1));
        Var lse = t.logsumexp_rows(h);
        Var rs = t.row_sums(t.hadamard(g, sp));
        Var cc = t.concat_cols(lse, rs);
        Var cr = t.concat_rows({sm, l2});
        Var cross = t.matmul_nt(sm, l2);
        Var loss = t.add(t.mean_all(cc), t.mean_all(cr));
        loss = t.add(loss, t.mean_all(e));
        loss = t.add(loss, t.mean_all(cross));
        loss = t.add(loss, t.cross_entropy(h, labels));
        return loss;
    };
    return check_params(std::move(params), build, opts, rng);
}

double check_alignment(const GradCheckOptions& opts, Rng& rng) {
    const std::size_t td = 5, ad = 6, vd = 4, proj = 7, batch = 3;
    std::vector<Matrix> params = {random_matrix(td, proj, rng), random_matrix(1, proj, rng),
                                  random_matrix(ad, proj, rng), random_matrix(1, proj, rng),
                                  random_matrix(vd, proj, rng), random_matrix(1, proj, rng)};
    const Matrix xt = random_matrix(batch, td, rng);
    const Matrix xa = random_matrix(batch, ad, rng);
    const Matrix xv = random_matrix(batch, vd, rng);
    const Matrix mom_t = l2_normalize_rows(random_matrix(batch, proj, rng));
    const Matrix mom_a = l2_normalize_rows(random_matrix(batch, proj, rng));
    const Matrix mom_v = l2_normalize_rows(random_matrix(batch, proj, rng));
    NegativeQueue qt(4, proj), qa(4, proj), qv(4, proj);
    qt.enqueue(l2_normalize_rows(random_matrix(3, proj, rng)));
    qa.enqueue(l2_normalize_rows(random_matrix(4, proj, rng)));
    qv.enqueue(l2_normalize_rows(random_matrix(2, proj, rng)));
    MecConfig mec;
    mec.tau = 0.7;
    mec.capacity = 4;
    BuildFn build = [&, mec](Tape& t, const std::vector<Var>& p) {
        Var t_hat = project_on_tape(t, t.constant(xt), p[0], p[1]);
        Var a_hat = project_on_tape(t, t.constant(xa), p[2], p[3]);
        Var v_hat = project_on_tape(t, t.constant(xv), p[4], p[5]);
        return mec_loss(t, t_hat, a_hat, v_hat, mom_t, mom_a, mom_v, qt, qa, qv, mec);
    };
    return check_params(std::move(params), build, opts, rng);
}

double check_fusion(const GradCheckOptions& opts, Rng& rng) {
    const std::size_t concat = 9, d_model = 6, d_attn = 5, layers = 2, n = 4;
    std::vector<Matrix> params;
    params.push_back(random_matrix(concat, d_model, rng));
    for (std::size_t l = 0; l < layers; ++l) {
        params.push_back(random_matrix(d_model, d_attn, rng));
        params.push_back(random_matrix(d_model, d_attn, rng));
        params.push_back(random_matrix(d_model, d_attn, rng));
        params.push_back(random_matrix(d_attn, d_model, rng));
    }
    params.push_back(random_matrix(concat, d_model, rng));
    params.push_back(random_matrix(d_model, d_model, rng));
    params.push_back(random_matrix(1, d_model, rng));
    const Matrix x = random_matrix(n, concat, rng);
    const std::vector<int> labels = {0, 3, 1, 5};
    BuildFn build = [&, layers](Tape& t, const std::vector<Var>& p) {
        FusionVars v;
        std::size_t i = 0;
        v.w_in = p[i++];
        v.layers.resize(layers);
        for (auto& l : v.layers) {
            l.w_q = p[i++];
            l.w_k = p[i++];
            l.w_v = p[i++];
            l.w_o = p[i++];
        }
        v.w_f = p[i++];
        v.fc_w = p[i++];
        v.fc_b = p[i++];
        Var z = fuse_dialogue(t, v, t.constant(x));
        return t.cross_entropy(z, labels);
    };
    return check_params(std::move(params), build, opts, rng);
}

double check_ssm(const GradCheckOptions& opts, Rng& rng) {
    const std::size_t d_model = 5, d_state = 3, n = 7;
    std::vector<Matrix> params = {
        random_matrix(d_model, d_state, rng, 0.3),  // a_log
        random_matrix(d_model, d_model, rng),       // w_delta
        random_matrix(1, d_model, rng),             // b_delta
        random_matrix(d_model, d_state, rng),       // w_b
        random_matrix(d_model, d_state, rng),       // w_c
        random_matrix(d_model, d_model, rng),       // w_z
        random_matrix(d_model, d_model, rng),       // w_out
        random_matrix(n, d_model, rng),             // z as a trainable input
    };
    BuildFn build = [](Tape& t, const std::vector<Var>& p) {
        SsmBlockVars v{p[0], p[1], p[2], p[3], p[4], p[5], p[6]};
        Var f = ssm_block_forward(t, v, p[7], 3);
        return t.mean_all(t.hadamard(f, f));
    };
    return check_params(std::move(params), build, opts, rng);
}

double check_model(const GradCheckOptions& opts, Rng& rng) {
    const std::size_t td = 4, ad = 5, vd = 3, classes = 3;
    ModelConfig mcfg;
    mcfg.d_model = 6;
    mcfg.d_attn = 5;
    mcfg.n_attn_layers = 2;
    mcfg.d_state = 3;
    mcfg.n_ssm_blocks = 1;
    mcfg.proj_dim = 6;
    MecConfig mec;
    mec.capacity = 8;
    MatavModel model(td, ad, vd, classes, mcfg, mec, 99);
    model.align.queue_a.enqueue(l2_normalize_rows(random_matrix(5, mcfg.proj_dim, rng)));
    model.align.queue_v.enqueue(l2_normalize_rows(random_matrix(4, mcfg.proj_dim, rng)));

    // Two-dialogue micro-batch.
    SynthConfig scfg;
    scfg.seed = 5;
    scfg.n_dialogues = 2;
    scfg.min_utterances = 2;
    scfg.max_utterances = 3;
    scfg.n_classes = classes;
    scfg.t_dim = td;
    scfg.a_dim = ad;
    scfg.v_dim = vd;
    scfg.latent_dim = 3;
    const DialogueSet data = generate_synthetic(scfg);
    std::vector<const Dialogue*> batch;
    for (const auto& d : data.dialogues) batch.push_back(&d);

    std::vector<Matrix> params;
    for (auto& [name, m] : model.parameters()) params.push_back(*m);
    TrainConfig tcfg;
    BuildFn build = [&](Tape& t, const std::vector<Var>& p) {
        auto named = model.parameters();
        for (std::size_t k = 0; k < named.size(); ++k) *named[k].second = t.value(p[k]);
        // Assemble the var structure over the caller's leaves, in the same
        // order bind_model uses.
        ModelVars v;
        v.ordered = p;
        std::size_t i = 0;
        v.heads.w_t = p[i++];
        v.heads.b_t = p[i++];
        v.heads.w_a = p[i++];
        v.heads.b_a = p[i++];
        v.heads.w_v = p[i++];
        v.heads.b_v = p[i++];
        v.fusion.w_in = p[i++];
        v.fusion.layers.resize(model.fusion.layers.size());
        for (auto& l : v.fusion.layers) {
            l.w_q = p[i++];
            l.w_k = p[i++];
            l.w_v = p[i++];
            l.w_o = p[i++];
        }
        v.fusion.w_f = p[i++];
        v.fusion.fc_w = p[i++];
        v.fusion.fc_b = p[i++];
        v.ssm_blocks.resize(model.ssm_blocks.size());
        for (auto& s : v.ssm_blocks) {
            s.a_log = p[i++];
            s.w_delta = p[i++];
            s.b_delta = p[i++];
            s.w_b = p[i++];
            s.w_c = p[i++];
            s.w_z = p[i++];
            s.w_out = p[i++];
        }
        v.w_clf = p[i++];
        v.b_clf = p[i++];
        BatchLoss loss = total_loss(t, v, model, batch, tcfg);
        return loss.total;
    };
    return check_params(std::move(params), build, opts, rng);
}

}  // namespace

std::map<std::string, double> run_gradcheck(const GradCheckOptions& opts,
                                            const std::string& only_module) {
    std::map<std::string, double> worst;
    Rng rng(opts.seed);
    const std::vector<std::pair<std::string, double (*)(const GradCheckOptions&, Rng&)>> checks =
        {{"numeric", &check_numeric},
         {"alignment", &check_alignment},
         {"fusion", &check_fusion},
         {"ssm", &check_ssm},
         {"model", &check_model}};
    bool matched = false;
    for (const auto& [name, fn] : checks) {
        if (!only_module.empty() && name != only_module) continue;
        matched = true;
        worst[name] = fn(opts, rng);
    }
    if (!matched) throw std::invalid_argument("gradcheck: unknown module " + only_module);
    return worst;
}

}  // namespace matav
