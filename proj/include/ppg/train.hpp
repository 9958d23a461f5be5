#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppg/adasyn.hpp"
#include "ppg/dataset.hpp"
#include "ppg/models.hpp"

namespace ppg {

struct SplitSpec {
    double train_fraction = 0.70;
    double validation_fraction_of_train = 0.15;
    bool stratified = true;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// Disjoint, exhaustive, seed-deterministic split; stratified keeps per-class
// proportions within one sample of the global ratio.
SplitIndices split(const PulseDataset& dataset, const SplitSpec& spec);

struct TrainSpec {
    std::size_t batch_size = 96;
    double lr = 6e-4;  // Transformer default; MLP uses 1e-4
    std::size_t max_epochs = 150;
    std::size_t early_stop_patience = 20;
    std::uint64_t seed = 1;

    void validate() const;
};

struct Metrics {
    double acc = 0.0, pre = 0.0, rec = 0.0, f1 = 0.0;
    bool pre_undefined = false, rec_undefined = false;
};

Metrics metrics(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

struct EvalReport {
    std::string model;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    Metrics m;
    std::vector<double> train_loss, val_loss;
    double smoothness = 0.0;  // mean |val_loss[e]-val_loss[e-1]| from epoch 5 on
    std::size_t epochs_run = 0;
    bool early_stopped = false;
    double wall_s = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;

    nlohmann::ordered_json to_json() const;
};

double smoothness_statistic(const std::vector<double>& val_loss);

enum class ModelKind { Transformer, GrnTransformer, Mlp, GrnMlp, Knn };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);
std::vector<std::string> supported_model_names();

struct ModelSpec {
    ModelKind kind = ModelKind::Transformer;
    TransformerConfig transformer;
    MlpConfig mlp;
    KnnConfig knn;

    static ModelSpec for_kind(ModelKind kind);
    double default_lr() const;
    nlohmann::ordered_json to_json() const;
};

std::string config_hash(const nlohmann::ordered_json& j);

struct TrainResult {
    std::shared_ptr<Classifier> model;  // null for KNN
    EvalReport report;
};

// Mini-batch Adam training with BCE loss and patience-based early stopping
// (best-validation parameters restored). KNN skips the loop and evaluates
// directly. ADASYN is the caller's job and must be applied to `train` only.
TrainResult train_model(const ModelSpec& mspec, const PulseDataset& train,
                        const PulseDataset& val, const PulseDataset& test, const TrainSpec& tspec);

// Confusion counts of a trained model on a labeled dataset (positive = 1).
void evaluate_model(Classifier& model, const PulseDataset& data, std::size_t& tp, std::size_t& fp,
                    std::size_t& tn, std::size_t& fn);

std::vector<double> predict_probs(Classifier& model, const PulseDataset& data);

struct CompareCell {
    std::string model;
    double portion = 1.0;
    std::uint64_t seed = 0;
    EvalReport report;
};

struct CompareResult {
    std::vector<CompareCell> cells;
    nlohmann::ordered_json summary;  // per-model aggregates + directional flags
};

// Full-pipeline comparison grid: stratified portion subsample -> split ->
// ADASYN on train -> train -> report, per (model, portion, seed).
CompareResult compare(const std::vector<ModelKind>& models, const std::vector<double>& portions,
                      const std::vector<std::uint64_t>& seeds, const PulseDataset& corpus,
                      const SplitSpec& split_spec, const TrainSpec& train_spec,
                      const AdasynConfig& adasyn_cfg, std::size_t threads = 1);

void write_compare_csv(const std::string& path, const CompareResult& result);
void write_curves_csv(const std::string& path, const CompareResult& result);

// Stratified subsample of a labeled corpus, deterministic per seed.
PulseDataset stratified_portion(const PulseDataset& corpus, double portion, std::uint64_t seed);

}  // namespace ppg
