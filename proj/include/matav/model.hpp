#pragma once

#include <string>
#include <vector>

#include "matav/adam.hpp"
#include "matav/alignment.hpp"
#include "matav/dataset.hpp"
#include "matav/fusion.hpp"
#include "matav/metrics.hpp"
#include "matav/ssm.hpp"
#include "matav/tape.hpp"

namespace matav {

enum class Ablation { none, no_mamba, no_mec };

Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

struct ModelConfig {
    std::size_t d_model = 256;
    std::size_t d_attn = 256;
    std::size_t n_attn_layers = 6;
    std::size_t d_state = 16;
    std::size_t n_ssm_blocks = 1;
    std::size_t proj_dim = 256;

    void validate() const;
};

struct TrainConfig {
    std::size_t batch_size = 64;  // dialogues per step
    std::size_t epochs = 100;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    uint64_t seed = 1;
    Ablation ablation = Ablation::none;
    bool use_sgd = false;

    void validate() const;
};

struct TrainReport {
    std::vector<double> ce_loss;       // per epoch, mean over steps
    std::vector<double> mec_loss;      // per epoch
    std::vector<double> total_loss;    // per epoch
    std::vector<double> train_accuracy;
    std::vector<double> train_wf1;
    std::vector<double> dev_accuracy;  // empty if no dev set
    std::vector<double> dev_wf1;
    double wallclock_s = 0.0;

    bool operator==(const TrainReport&) const = default;
    std::string to_json() const;
};

struct MatavModel {
    std::size_t t_dim, a_dim, v_dim, n_classes;
    ModelConfig cfg;
    AlignmentState align;
    FusionStack fusion;
    std::vector<SsmBlock> ssm_blocks;
    Matrix w_clf;  // d_model x K
    Matrix b_clf;  // 1 x K

    MatavModel(std::size_t t_dim, std::size_t a_dim, std::size_t v_dim, std::size_t n_classes,
               const ModelConfig& cfg, const MecConfig& mec, uint64_t seed);

    // Trainable parameters in a fixed documented order (momentum heads and
    // queues excluded). Names are stable and used by the checkpoint format.
    std::vector<std::pair<std::string, Matrix*>> parameters();
    std::vector<std::pair<std::string, const Matrix*>> parameters() const;

private:
    struct Parts;
    static Parts make_parts(std::size_t t_dim, std::size_t a_dim, std::size_t v_dim,
                            std::size_t n_classes, const ModelConfig& cfg, const MecConfig& mec,
                            uint64_t seed);
    MatavModel(std::size_t t_dim, std::size_t a_dim, std::size_t v_dim, std::size_t n_classes,
               const ModelConfig& cfg, Parts&& parts);
};

struct ModelVars {
    HeadVars heads;
    FusionVars fusion;
    std::vector<SsmBlockVars> ssm_blocks;
    Var w_clf, b_clf;
    std::vector<Var> ordered;  // leaf per parameter, same order as parameters()
};

ModelVars bind_model(Tape& tape, const MatavModel& model);

// Logits for one dialogue (n x K). Under Ablation::no_mamba the SSM stack
// is the identity on Z.
Matrix forward_dialogue(const MatavModel& model, const Dialogue& d, Ablation ablation);
Var forward_dialogue(Tape& tape, const ModelVars& vars, const MatavModel& model, Var x_concat,
                     Ablation ablation);

int predict(const Matrix& logits_row);

Matrix features_concat(const Dialogue& d);
Matrix features_t(const std::vector<const Dialogue*>& ds);
Matrix features_a(const std::vector<const Dialogue*>& ds);
Matrix features_v(const std::vector<const Dialogue*>& ds);

// Total loss for a batch of dialogues on a fresh tape; returns the scalar
// var plus the vars/constants needed by the caller.
struct BatchLoss {
    Var total, ce;
    Var mec;           // invalid when the MEC term is off
    Var logits;        // all utterances, batch order
    Matrix mom_t, mom_a, mom_v;  // momentum projections (empty when MEC off)
    std::vector<int> labels;
};

BatchLoss total_loss(Tape& tape, const ModelVars& vars, MatavModel& model,
                     const std::vector<const Dialogue*>& batch, const TrainConfig& cfg);

TrainReport train(MatavModel& model, const DialogueSet& train_set, const DialogueSet* dev_set,
                  const TrainConfig& cfg);

MetricsReport evaluate(const MatavModel& model, const DialogueSet& set, Ablation ablation);

// Mean matched-pair vs queue-negative similarity of the online projections;
// used by the alignment-effect checks.
struct SimilarityGap {
    double matched_mean = 0.0;
    double negative_mean = 0.0;
    double gap() const { return matched_mean - negative_mean; }
};
SimilarityGap similarity_gap(const MatavModel& model, const DialogueSet& set);

struct AblationRow {
    std::string variant;
    uint64_t seed;
    double wf1;
    double accuracy;
    std::size_t epochs;
    double wallclock_s;
};

// Trains {full, no_mamba, no_mec} per seed and evaluates on eval_set.
std::vector<AblationRow> run_ablation_suite(const DialogueSet& train_set,
                                            const DialogueSet& eval_set, const ModelConfig& mcfg,
                                            const MecConfig& mec, const TrainConfig& tcfg,
                                            const std::vector<uint64_t>& seeds);

std::string ablation_csv(const std::vector<AblationRow>& rows);

void save_checkpoint(const MatavModel& model, const std::string& path);
MatavModel load_checkpoint(const std::string& path);

}  // namespace matav
