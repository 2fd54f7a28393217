#include "tarnet/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tarnet/error.hpp"
#include "tarnet/io.hpp"
#include "tarnet/optimizer.hpp"
#include "tarnet/rng.hpp"

namespace tarnet {

std::size_t TransferConfig::resolved_freeze_depth(const NetworkSpec& spec) const {
  if (freeze_depth) return *freeze_depth;
  return spec.encoder_layer_count() - 1;
}

void TransferConfig::validate(const NetworkSpec& spec) const {
  const std::size_t depth = resolved_freeze_depth(spec);
  if (depth >= spec.layer_count()) {
    throw ConfigError("transfer: freeze_depth " + std::to_string(depth) + " leaves no trainable layer (" +
                      std::to_string(spec.layer_count()) + " layers)");
  }
  for (double l : {lambda_tt, lambda_cc, lambda_wt}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("transfer: lambda weights must be >= 0");
  }
  for (double lr : {phase1.learning_rate, phase2.learning_rate}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("transfer: learning rates must be positive");
  }
  if (phase2.batch_size && *phase2.batch_size < 1) throw ConfigError("transfer: phase2 batch_size must be >= 1");
  if (source_reference_size < 2) throw ConfigError("transfer: source_reference_size must be >= 2");
  phase1.ipm.validate();
}

TarnetModel transplant(const TarnetModel& source, std::size_t freeze_depth) {
  if (freeze_depth >= source.params().layer_count()) {
    throw InvalidSpecError("transplant: freezing " + std::to_string(freeze_depth) + " of " +
                           std::to_string(source.params().layer_count()) +
                           " layers leaves nothing trainable");
  }
  return TarnetModel(source.spec(), freeze_layers(source.params(), freeze_depth));
}

GroupedCovariates group_covariates(const DataView& data, std::span<const std::size_t> rows) {
  GroupedCovariates g{SampleSet(data.dim()), SampleSet(data.dim())};
  for (std::size_t r : rows) {
    const auto x = data.x(r);
    (data.t(r) == 1 ? g.treated : g.control).push_back(x);
  }
  if (g.control.empty() || g.treated.empty()) {
    throw DataError("alignment: a treatment group is empty");
  }
  return g;
}

namespace {

struct Encoded {
  SampleSet phi;
  std::vector<ChainTrace> traces;
};

Encoded encode(const TarnetModel& model, const SampleSet& x) {
  if (x.dim() != model.spec().input_dim) {
    throw DimensionError("alignment: covariates have " + std::to_string(x.dim()) +
                         " columns, model takes " + std::to_string(model.spec().input_dim));
  }
  Encoded e{SampleSet(model.spec().representation_dim()), std::vector<ChainTrace>(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    forward(model.params(), model.encoder_chain(), x.row(i), e.traces[i]);
    e.phi.push_back(e.traces[i].output());
  }
  return e;
}

IpmConfig resolve_scale(const SampleSet& a, const SampleSet& b, const IpmConfig& base) {
  IpmConfig cfg = base;
  if (cfg.kind == IpmKind::mmd_rbf && !cfg.bandwidth) {
    const double med = median_pairwise_distance(a, b);
    if (med > 0.0 && std::isfinite(med)) cfg.bandwidth = med;
  } else if (cfg.kind == IpmKind::sinkhorn && !cfg.epsilon) {
    const double med = median_pairwise_distance(a, b);
    if (med > 0.0 && std::isfinite(med)) cfg.epsilon = 0.1 * med;
  }
  return cfg;
}

void add_scaled(std::vector<double>& acc, const std::vector<double>& g, double scale) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += scale * g[k];
}

void backprop_set(const TarnetModel& model, const Encoded& e, const std::vector<double>& grad,
                  Gradients& out) {
  const std::size_t d = e.phi.dim();
  for (std::size_t i = 0; i < e.traces.size(); ++i) {
    std::span<const double> g(grad.data() + i * d, d);
    if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
    backward(model.params(), model.encoder_chain(), e.traces[i], g, out);
  }
}

// Terms with zero weight are skipped unless `every_term` is set.
AlignmentValue align(const TarnetModel& model, const GroupedCovariates& source,
                     const GroupedCovariates& target, const TransferConfig& cfg,
                     const AlignmentScales& scales, bool with_gradients, bool every_term) {
  const Encoded sc = encode(model, source.control);
  const Encoded st = encode(model, source.treated);
  const Encoded tc = encode(model, target.control);
  const Encoded tt = encode(model, target.treated);

  std::vector<double> g_sc(sc.phi.values().size(), 0.0), g_st(st.phi.values().size(), 0.0);
  std::vector<double> g_tc(tc.phi.values().size(), 0.0), g_tt(tt.phi.values().size(), 0.0);

  AlignmentValue out;
  if (cfg.lambda_tt > 0.0 || every_term) {
    const IpmResult r = ipm(tt.phi, st.phi, scales.treated);
    out.terms.target_source_treated = r.value;
    add_scaled(g_tt, r.grad_a, cfg.lambda_tt);
    add_scaled(g_st, r.grad_b, cfg.lambda_tt);
  }
  if (cfg.lambda_cc > 0.0 || every_term) {
    const IpmResult r = ipm(tc.phi, sc.phi, scales.control);
    out.terms.target_source_control = r.value;
    add_scaled(g_tc, r.grad_a, cfg.lambda_cc);
    add_scaled(g_sc, r.grad_b, cfg.lambda_cc);
  }
  if (cfg.lambda_wt > 0.0 || every_term) {
    const IpmResult r = ipm(tc.phi, tt.phi, scales.within);
    out.terms.within_target = r.value;
    add_scaled(g_tc, r.grad_a, cfg.lambda_wt);
    add_scaled(g_tt, r.grad_b, cfg.lambda_wt);
  }
  out.terms.total = cfg.lambda_tt * out.terms.target_source_treated +
                    cfg.lambda_cc * out.terms.target_source_control +
                    cfg.lambda_wt * out.terms.within_target;
  if (with_gradients) {
    out.grads = Gradients::zeros_like(model.params());
    backprop_set(model, sc, g_sc, out.grads);
    backprop_set(model, st, g_st, out.grads);
    backprop_set(model, tc, g_tc, out.grads);
    backprop_set(model, tt, g_tt, out.grads);
  }
  return out;
}

std::vector<std::size_t> reference_rows(std::size_t n, std::size_t limit, std::uint64_t seed) {
  std::vector<std::size_t> rows = all_rows(n);
  if (n <= limit) return rows;
  Rng rng(seed);
  for (std::size_t i = 0; i < limit; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(rows[i], rows[pick(rng)]);
  }
  rows.resize(limit);
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

AlignmentScales resolve_alignment_scales(const TarnetModel& model, const GroupedCovariates& source,
                                         const GroupedCovariates& target, const IpmConfig& ipm) {
  const Encoded sc = encode(model, source.control);
  const Encoded st = encode(model, source.treated);
  const Encoded tc = encode(model, target.control);
  const Encoded tt = encode(model, target.treated);
  return AlignmentScales{resolve_scale(tt.phi, st.phi, ipm), resolve_scale(tc.phi, sc.phi, ipm),
                         resolve_scale(tc.phi, tt.phi, ipm)};
}

AlignmentValue alignment_loss(const TarnetModel& model, const GroupedCovariates& source,
                              const GroupedCovariates& target, const TransferConfig& cfg,
                              const AlignmentScales& scales, bool with_gradients) {
  return align(model, source, target, cfg, scales, with_gradients, false);
}

AlignmentValue alignment_loss(const TarnetModel& model, const DataView& source,
                              const DataView& target, const TransferConfig& cfg) {
  const auto s = group_covariates(source, all_rows(source.size()));
  const auto t = group_covariates(target, all_rows(target.size()));
  return align(model, s, t, cfg, resolve_alignment_scales(model, s, t, cfg.phase1.ipm), true,
               false);
}

AlignPhaseResult phase1_align(const TarnetModel& model, const DataView& source,
                              const DataView& target, const TransferConfig& cfg) {
  const auto ref = reference_rows(source.size(), cfg.source_reference_size,
                                  derive_seed(cfg.seed, {fnv1a("reference")}));
  const auto s = group_covariates(source, ref);
  const auto t = group_covariates(target, all_rows(target.size()));

  AlignPhaseResult out{model, {}, {}, {}, {}, {}};
  out.scales = resolve_alignment_scales(out.model, s, t, cfg.phase1.ipm);
  OptimizerState opt(out.model.params(), AdamOptions{cfg.phase1.learning_rate});
  for (std::size_t epoch = 0; epoch < cfg.phase1.epochs; ++epoch) {
    AlignmentValue v = align(out.model, s, t, cfg, out.scales, true, false);
    if (!std::isfinite(v.terms.total)) {
      throw AlignmentDiverged("phase 1: non-finite alignment loss at epoch " + std::to_string(epoch),
                              std::move(out.trace));
    }
    if (epoch == 0) out.initial = v.terms;
    out.trace.push_back(v.terms.total);
    try {
      adam_step(out.model.mutable_params(), v.grads, opt);
    } catch (const NumericalError& e) {
      throw AlignmentDiverged(std::string("phase 1: ") + e.what(), std::move(out.trace));
    }
  }
  out.final = align(out.model, s, t, cfg, out.scales, false, false).terms;
  if (cfg.phase1.epochs == 0) out.initial = out.final;
  out.source_reference = ref;
  return out;
}

FinetunePhaseResult phase2_finetune(const TarnetModel& model, const DataView& target,
                                    const TransferConfig& cfg) {
  TrainConfig tc;
  tc.learning_rate = cfg.phase2.learning_rate;
  tc.epochs = cfg.phase2.epochs;
  tc.batch_size = cfg.phase2.batch_size.value_or(target.size());
  tc.alpha = 0.0;
  tc.seed = derive_seed(cfg.seed, {fnv1a("phase2")});
  tc.train_fraction = 1.0;
  const auto rows = all_rows(target.size());
  const double before = factual_loss(model, target, rows).factual;
  TrainResult r = train_model(model, target, tc);
  const double after = factual_loss(r.model, target, rows).factual;
  return FinetunePhaseResult{std::move(r.model), std::move(r.history), before, after};
}

namespace {

template <class F>
auto in_phase(const std::string& phase, F&& f) {
  const auto tag = [&](const std::exception& e) { return "transfer " + phase + ": " + e.what(); };
  try {
    return f();
  } catch (const TrainingDiverged& e) {
    throw TrainingDiverged(tag(e), e.history());
  } catch (const AlignmentDiverged& e) {
    throw AlignmentDiverged(tag(e), e.trace());
  } catch (const NumericalError& e) {
    throw NumericalError(tag(e));
  } catch (const DimensionError& e) {
    throw DimensionError(tag(e));
  } catch (const DataError& e) {
    throw DataError(tag(e));
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const InvalidSpecError& e) {
    throw InvalidSpecError(tag(e));
  }
}

}  // namespace

TransferResult transfer_pipeline(const TarnetModel& source_model, const DataView& source,
                                 const DataView& target, const TransferConfig& cfg) {
  cfg.validate(source_model.spec());
  const std::size_t depth = cfg.resolved_freeze_depth(source_model.spec());
  TarnetModel model = in_phase("transplant", [&] { return transplant(source_model, depth); });

  TransferReport report;
  report.freeze_depth = depth;
  report.frozen_scalars = model.params().frozen_scalar_count();
  report.mean_ite_before = mean_ite(model, target);

  AlignPhaseResult p1 = in_phase("phase 1", [&] { return phase1_align(model, source, target, cfg); });
  report.phase1_trace = std::move(p1.trace);
  report.phase1_initial = p1.initial;
  report.phase1_final = p1.final;

  FinetunePhaseResult p2 = in_phase("phase 2", [&] { return phase2_finetune(p1.model, target, cfg); });
  report.phase2_history = std::move(p2.history);
  report.phase2_initial_factual = p2.initial_factual;
  report.phase2_final_factual = p2.final_factual;

  report.final_ipm = in_phase("final alignment", [&] {
    const auto s = group_covariates(source, p1.source_reference);
    const auto t = group_covariates(target, all_rows(target.size()));
    return align(p2.model, s, t, cfg, p1.scales, false, true).terms;
  });
  report.mean_ite_after = mean_ite(p2.model, target);
  return TransferResult{std::move(p2.model), std::move(report)};
}

std::string alignment_trace_to_csv(std::span<const double> trace) {
  std::string out = "epoch,alignment_loss\n";
  for (std::size_t e = 0; e < trace.size(); ++e) {
    out += std::to_string(e) + ',' + format_double(trace[e]) + '\n';
  }
  return out;
}

}  // namespace tarnet
