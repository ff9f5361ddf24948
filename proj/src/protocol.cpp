#include "cfb/protocol.hpp"

#include "cfb/rng.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

namespace cfb {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string hash_hex(const std::string& s) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(s);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

namespace {

std::string protocol_suffix(const ProtocolOptions& opt) {
  std::ostringstream os;
  os << "seed=" << opt.seed << "|tmax=" << opt.t_max << "|batch=" << opt.batch_size
     << "|eval=" << opt.eval_every;
  return os.str();
}

}  // namespace

std::string run_descriptor(const std::string& task, const std::string& role,
                           const HyperParams& hp, const ProtocolOptions& opt,
                           const std::string& extra) {
  std::ostringstream os;
  os << "task=" << task << "|family=" << family_name(hp.family) << "|role=" << role;
  if (role != "phase2") {
    os << "|L=" << hp.hidden_layers << "|S=" << hp.layer_size
       << "|eps1=" << format_double(hp.eps_d1);
  }
  if (role == "prescient" || role == "phase2") os << "|eps2=" << format_double(hp.eps_d2);
  if (!extra.empty()) os << "|" << extra;
  os << "|" << protocol_suffix(opt);
  return os.str();
}

std::string d1_descriptor(const std::string& task, const HyperParams& hp,
                          const ProtocolOptions& opt) {
  HyperParams base = hp;
  base.eps_d2 = 0.0;
  return run_descriptor(task, "d1", base, opt);
}

double accuracy_on(const NetworkState<Real>& state, const LabeledSet& set) {
  // conv inputs keep im2col buffers per chunk; smaller chunks bound memory
  const Index chunk = state.spec.input_shape.size() == 1 ? 512 : 128;
  return accuracy(state, set.images, std::span<const int>(set.labels), chunk);
}

PhaseOutcome train_phase(NetworkState<Real>& state, const SetGuard& train,
                         const std::vector<EvalTarget>& evals, const TrainPhaseOptions& opt) {
  if (opt.iters <= 0) throw std::invalid_argument("train_phase: iteration count must be positive");
  const LabeledSet& train_set = train.get();
  BatchStream stream(train_set.size(), opt.batch_size,
                     derive_seed(opt.seed, fnv1a64("batches")));

  PhaseOutcome out;
  out.curves.reserve(evals.size());
  for (const auto& e : evals) out.curves.push_back({e.curve_name, {}});

  auto evaluate = [&](long local_iter) {
    for (std::size_t k = 0; k < evals.size(); ++k) {
      const double acc = accuracy_on(state, evals[k].set.get());
      out.curves[k].points.push_back({opt.iter_offset + local_iter, acc});
    }
    if (opt.keep_best && !evals.empty()) {
      const CurvePoint& p = out.curves[0].points.back();
      if (p.acc > out.best_q) {
        out.best_q = p.acc;
        out.best_iter = p.iter;
        out.best_state = state;
      }
    }
  };

  evaluate(0);
  Gradients<Real> grads;
  for (long it = 1; it <= opt.iters; ++it) {
    const auto idx = stream.next();
    const Tensor<Real> batch = gather_images(train_set, idx, state.spec.input_shape);
    const std::vector<int> labels = gather_labels(train_set, idx);
    auto [logits, trace] =
        forward(state, batch, Mode::train,
                derive_seed(opt.seed, fnv1a64("dropout") + static_cast<std::uint64_t>(it)));
    auto [loss, dlogits] = cross_entropy_loss(logits, std::span<const int>(labels));
    (void)loss;
    backward(state, trace, dlogits, grads);
    if (opt.ewc) {
      auto [penalty, pgrads] =
          ewc_penalty(state, *opt.ewc->anchor, *opt.ewc->fisher, opt.ewc->lambda);
      (void)penalty;
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i].array() += pgrads[i].array();
    }
    sgd_momentum_step(state, grads, opt.learning_rate, opt.momentum);
    if (it % opt.eval_every == 0 || it == opt.iters) evaluate(it);
  }
  return out;
}

std::size_t stop_point_index(const Curve& curve) {
  if (curve.points.empty()) throw std::invalid_argument("stop rule: empty curve");
  double best = curve.points.front().acc;
  for (const CurvePoint& p : curve.points) best = std::max(best, p.acc);
  for (std::size_t i = 0; i < curve.points.size(); ++i)
    if (curve.points[i].acc > 0.99 * best) return i;
  return 0;  // flat-zero curve: every point attains the maximum
}

double chance_level(const TaskSpec& task) {
  std::set<int> all(task.d1_classes.begin(), task.d1_classes.end());
  all.insert(task.d2_classes.begin(), task.d2_classes.end());
  if (all.empty()) throw std::invalid_argument("chance_level: task without classes");
  if (task.kind == TaskKind::permutation)
    return 1.0 / static_cast<double>(all.size());
  std::set<int> d2(task.d2_classes.begin(), task.d2_classes.end());
  return static_cast<double>(d2.size()) / static_cast<double>(all.size());
}

namespace {

void reset_momentum(NetworkState<Real>& state) {
  for (auto& m : state.momentum) m.set_zero();
}

// Runs fn(0..n-1) on up to `threads` workers. Exceptions are captured and the
// first one (in job order) is rethrown after all workers finish.
void parallel_jobs(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

RunRecord make_record(const std::string& role, const HyperParams& hp,
                      const std::string& descriptor, const ProtocolOptions& opt) {
  RunRecord rec;
  rec.id = hash_hex(descriptor);
  rec.descriptor = descriptor;
  rec.role = role;
  rec.hp = hp;
  rec.seed = derive_seed(opt.seed, fnv1a64(descriptor));
  rec.t_max = opt.t_max;
  rec.eval_every = opt.eval_every;
  rec.batch_size = opt.batch_size;
  return rec;
}

// Best successful run under strict improvement, so earlier grid points win
// ties deterministically.
const RunRecord* best_record(const std::vector<RunRecord>& records,
                             const std::string& role) {
  const RunRecord* best = nullptr;
  for (const RunRecord& r : records)
    if (!r.failed && r.role == role && (best == nullptr || r.q > best->q)) best = &r;
  return best;
}

void fill_quality_from_curve(RunRecord& rec, const Curve& curve) {
  rec.q = -1.0;
  for (const CurvePoint& p : curve.points)
    if (p.acc > rec.q) {
      rec.q = p.acc;
      rec.best_iter = p.iter;
    }
}

std::shared_ptr<const AnchorParams<Real>> anchor_of(const NetworkState<Real>& state) {
  return std::make_shared<AnchorParams<Real>>(capture_anchor(state));
}

}  // namespace

ExperimentOutcome prescient_eval(ModelFamily family, const TaskSpec& task,
                                 const std::vector<HyperParams>& grid,
                                 const ProtocolOptions& opt, RunStore* store) {
  if (grid.empty()) throw std::invalid_argument("prescient_eval: empty grid");
  for (const HyperParams& hp : grid) {
    if (hp.family != family)
      throw std::invalid_argument("prescient_eval: mixed model families in grid");
    if (!(hp.eps_d2 > 0.0))
      throw std::invalid_argument("prescient_eval: grid point without a retraining rate");
  }

  std::vector<RunRecord> records(grid.size());
  std::vector<char> cached(grid.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    records[i] = make_record("prescient", grid[i],
                             run_descriptor(task.name, "prescient", grid[i], opt), opt);
    if (store) {
      if (auto prev = store->load_run(records[i].id)) {
        records[i] = *prev;
        cached[i] = 1;
        store->progress("prescient " + hyperparams_string(grid[i]) + ": cached");
      }
    }
  }

  // Grid points sharing (L,S,eps1) share the initial-training trajectory;
  // train it once per group.
  std::vector<std::string> group_desc;
  std::vector<std::vector<std::size_t>> group_slots;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::string desc = d1_descriptor(task.name, grid[i], opt);
    auto it = std::find(group_desc.begin(), group_desc.end(), desc);
    if (it == group_desc.end()) {
      group_desc.push_back(desc);
      group_slots.push_back({i});
    } else {
      group_slots[static_cast<std::size_t>(it - group_desc.begin())].push_back(i);
    }
  }

  std::atomic<int> done{static_cast<int>(std::count(cached.begin(), cached.end(), 1))};
  const int total = static_cast<int>(grid.size());
  parallel_jobs(group_desc.size(), opt.threads, [&](std::size_t g) {
    std::vector<std::size_t> missing;
    for (std::size_t slot : group_slots[g])
      if (!cached[slot]) missing.push_back(slot);
    if (missing.empty()) return;

    const HyperParams& base_hp = grid[group_slots[g][0]];
    const std::uint64_t s_d1 = derive_seed(opt.seed, fnv1a64(group_desc[g]));

    // initial training on the first sub-task
    NetworkState<Real> trained;
    Curve d1_curve{kCurveD1, {}};
    std::shared_ptr<const AnchorParams<Real>> anchor;
    std::shared_ptr<const FisherDiag<Real>> fisher;
    try {
      trained = init_network<Real>(make_model_spec(base_hp), derive_seed(s_d1, fnv1a64("init")));
      TrainPhaseOptions popt;
      popt.iters = opt.t_max;
      popt.learning_rate = base_hp.eps_d1;
      popt.eval_every = opt.eval_every;
      popt.batch_size = opt.batch_size;
      popt.seed = s_d1;
      PhaseOutcome d1 = train_phase(trained, SetGuard(&task.d1_train),
                                    {{kCurveD1, SetGuard(&task.d1_test)}}, popt);
      d1_curve = std::move(d1.curves[0]);
      if (family_is_ewc(family)) {
        anchor = anchor_of(trained);
        fisher = std::make_shared<FisherDiag<Real>>(
            estimate_fisher(trained, task.d1_train.images, opt.fisher_samples,
                            derive_seed(s_d1, fnv1a64("fisher"))));
      }
    } catch (const std::runtime_error& e) {
      for (std::size_t slot : missing) {
        records[slot].failed = true;
        records[slot].error = std::string("initial training failed: ") + e.what();
        if (store) store->save_run(records[slot]);
      }
      return;
    }

    for (std::size_t slot : missing) {
      RunRecord& rec = records[slot];
      const HyperParams& hp = grid[slot];
      try {
        NetworkState<Real> net = trained;
        reset_momentum(net);
        EwcTerm term;
        TrainPhaseOptions popt;
        popt.iters = opt.t_max;
        popt.learning_rate = hp.eps_d2;
        popt.eval_every = opt.eval_every;
        popt.batch_size = opt.batch_size;
        popt.seed = rec.seed;
        popt.iter_offset = opt.t_max;
        if (family_is_ewc(family)) {
          term.anchor = anchor;
          term.fisher = fisher;
          term.lambda = lambda_from_retrain_rate(hp.eps_d2);
          popt.ewc = &term;
        }
        PhaseOutcome d2 = train_phase(net, SetGuard(&task.d2_train),
                                      {{kCurveD2, SetGuard(&task.d2_test)},
                                       {kCurveUnion, SetGuard(&task.union_test)}},
                                      popt);
        rec.curves = {d1_curve, d2.curves[0], d2.curves[1]};
        fill_quality_from_curve(rec, d2.curves[1]);
      } catch (const std::runtime_error& e) {
        rec.failed = true;
        rec.error = e.what();
        rec.curves = {d1_curve};
      }
      if (store) {
        store->save_run(rec);
        std::ostringstream os;
        os << "prescient " << (done.fetch_add(1) + 1) << "/" << total << " "
           << hyperparams_string(hp) << ": "
           << (rec.failed ? "failed" : "q=" + format_double(rec.q));
        store->progress(os.str());
      }
    }
  });

  ExperimentOutcome out;
  out.runs = std::move(records);
  const RunRecord* best = best_record(out.runs, "prescient");
  if (!best) throw AllRunsFailed("prescient_eval: every grid point failed");
  out.q_star = best->q;
  out.best_run = best->id;
  return out;
}

ExperimentOutcome realistic_eval(ModelFamily family, const TaskSpec& task,
                                 const std::vector<HyperParams>& phase1_grid,
                                 const std::vector<double>& retrain_rates,
                                 const ProtocolOptions& opt, RunStore* store) {
  if (phase1_grid.empty()) throw std::invalid_argument("realistic_eval: empty phase-1 grid");
  if (retrain_rates.empty()) throw std::invalid_argument("realistic_eval: no retraining rates");
  for (const HyperParams& hp : phase1_grid)
    if (hp.family != family)
      throw std::invalid_argument("realistic_eval: mixed model families in grid");
  for (double rate : retrain_rates)
    if (!(rate > 0.0)) throw std::invalid_argument("realistic_eval: rates must be positive");

  // Access to the first sub-task closes for good once phase 2 begins.
  SetGuard d1_train_guard(&task.d1_train);
  SetGuard d1_test_guard(&task.d1_test);

  std::vector<RunRecord> p1_records(phase1_grid.size());
  std::vector<char> p1_cached(phase1_grid.size(), 0);
  std::string grid_digest;
  for (std::size_t i = 0; i < phase1_grid.size(); ++i) {
    const std::string desc = run_descriptor(task.name, "phase1", phase1_grid[i], opt);
    p1_records[i] = make_record("phase1", phase1_grid[i], desc, opt);
    grid_digest += desc + ";";
  }
  const std::string p1grid_hash = hash_hex(grid_digest);
  const std::string selected_key =
      "selected|task=" + task.name + "|family=" + family_name(family) +
      "|p1grid=" + p1grid_hash + "|" + protocol_suffix(opt);

  std::vector<RunRecord> p2_records(retrain_rates.size());
  std::vector<char> p2_cached(retrain_rates.size(), 0);
  for (std::size_t j = 0; j < retrain_rates.size(); ++j) {
    HyperParams hp;
    hp.family = family;
    hp.eps_d2 = retrain_rates[j];
    p2_records[j] = make_record(
        "phase2", hp,
        run_descriptor(task.name, "phase2", hp, opt, "p1grid=" + p1grid_hash), opt);
  }

  if (store) {
    for (std::size_t i = 0; i < p1_records.size(); ++i)
      if (auto prev = store->load_run(p1_records[i].id)) {
        p1_records[i] = *prev;
        p1_cached[i] = 1;
        store->progress("phase1 " + hyperparams_string(phase1_grid[i]) + ": cached");
      }
    for (std::size_t j = 0; j < p2_records.size(); ++j)
      if (auto prev = store->load_run(p2_records[j].id)) {
        p2_records[j] = *prev;
        p2_cached[j] = 1;
        store->progress("phase2 eps2=" + format_double(retrain_rates[j]) + ": cached");
      }
  }

  const bool need_model =
      std::any_of(p2_cached.begin(), p2_cached.end(), [](char c) { return !c; });

  // ---- Phase 1: initial training and model selection on D1 alone ----
  std::vector<std::optional<SelectedModel>> snapshots(phase1_grid.size());
  auto run_phase1_point = [&](std::size_t i, bool keep_snapshot) {
    RunRecord& rec = p1_records[i];
    const HyperParams& hp = phase1_grid[i];
    const std::uint64_t s_d1 =
        derive_seed(opt.seed, fnv1a64(d1_descriptor(task.name, hp, opt)));
    try {
      NetworkState<Real> net =
          init_network<Real>(make_model_spec(hp), derive_seed(s_d1, fnv1a64("init")));
      TrainPhaseOptions popt;
      popt.iters = opt.t_max;
      popt.learning_rate = hp.eps_d1;
      popt.eval_every = opt.eval_every;
      popt.batch_size = opt.batch_size;
      popt.seed = s_d1;
      popt.keep_best = true;
      PhaseOutcome d1 = train_phase(net, d1_train_guard, {{kCurveD1, d1_test_guard}}, popt);
      rec.curves = {d1.curves[0]};
      rec.q = d1.best_q;
      rec.best_iter = d1.best_iter;
      rec.failed = false;
      rec.error.clear();
      if (keep_snapshot)
        snapshots[i] = SelectedModel{rec.id, d1.best_iter, d1.best_q,
                                     std::move(d1.best_state), std::nullopt};
    } catch (const std::runtime_error& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    if (store) {
      store->save_run(rec);
      store->progress("phase1 " + hyperparams_string(hp) + ": " +
                      (rec.failed ? "failed" : "best chi(D1,D1)=" + format_double(rec.q) +
                                                   " at t=" + std::to_string(rec.best_iter)));
    }
  };

  std::vector<std::size_t> p1_missing;
  for (std::size_t i = 0; i < phase1_grid.size(); ++i)
    if (!p1_cached[i]) p1_missing.push_back(i);
  parallel_jobs(p1_missing.size(), opt.threads,
                [&](std::size_t k) { run_phase1_point(p1_missing[k], need_model); });

  std::optional<SelectedModel> selected;
  if (need_model) {
    // argmax over all phase-1 runs and evaluation points
    std::size_t best_slot = phase1_grid.size();
    double best_q = -1.0;
    for (std::size_t i = 0; i < p1_records.size(); ++i)
      if (!p1_records[i].failed && p1_records[i].q > best_q) {
        best_q = p1_records[i].q;
        best_slot = i;
      }
    if (best_slot == phase1_grid.size())
      throw AllRunsFailed("realistic_eval: every phase-1 run failed");

    if (snapshots[best_slot]) {
      selected = std::move(*snapshots[best_slot]);
    } else if (store) {
      if (auto stored = store->load_selected(selected_key);
          stored && stored->run_id == p1_records[best_slot].id &&
          stored->iter == p1_records[best_slot].best_iter) {
        selected = std::move(*stored);
      }
    }
    if (!selected) {
      // cached winner without its snapshot: replay that single run
      if (store) store->progress("phase1 replay for the selected model");
      run_phase1_point(best_slot, true);
      if (!snapshots[best_slot])
        throw AllRunsFailed("realistic_eval: selected phase-1 run failed on replay");
      selected = std::move(*snapshots[best_slot]);
    }
    snapshots.clear();

    // One-time consolidation while the first sub-task is still accessible.
    if (family_is_ewc(family) && !selected->fisher) {
      selected->fisher = estimate_fisher(
          selected->state, d1_train_guard.get().images, opt.fisher_samples,
          derive_seed(opt.seed, fnv1a64("fisher|" + selected_key)));
    }
    if (store) store->save_selected(selected_key, *selected);
  }

  d1_train_guard.revoke();
  d1_test_guard.revoke();

  // ---- Phase 2: retraining controlled by the second sub-task alone ----
  std::shared_ptr<const AnchorParams<Real>> anchor;
  std::shared_ptr<const FisherDiag<Real>> fisher;
  if (need_model && family_is_ewc(family)) {
    anchor = anchor_of(selected->state);
    fisher = std::make_shared<FisherDiag<Real>>(std::move(*selected->fisher));
  }

  // the selected point's topology, echoed into phase-2 records
  HyperParams selected_hp;
  bool have_selected_hp = false;
  if (selected) {
    for (const RunRecord& r : p1_records)
      if (r.id == selected->run_id) {
        selected_hp = r.hp;
        have_selected_hp = true;
      }
  }

  std::vector<std::size_t> p2_missing;
  for (std::size_t j = 0; j < retrain_rates.size(); ++j)
    if (!p2_cached[j]) p2_missing.push_back(j);
  parallel_jobs(p2_missing.size(), opt.threads, [&](std::size_t k) {
    const std::size_t j = p2_missing[k];
    RunRecord& rec = p2_records[j];
    const double rate = retrain_rates[j];
    if (have_selected_hp) {
      rec.hp = selected_hp;
      rec.hp.eps_d2 = rate;
    }
    try {
      NetworkState<Real> net = selected->state;
      reset_momentum(net);
      EwcTerm term;
      TrainPhaseOptions popt;
      popt.iters = opt.t_max;
      popt.learning_rate = rate;
      popt.eval_every = opt.eval_every;
      popt.batch_size = opt.batch_size;
      popt.seed = rec.seed;
      popt.iter_offset = opt.t_max;
      if (family_is_ewc(family)) {
        term.anchor = anchor;
        term.fisher = fisher;
        term.lambda = lambda_from_retrain_rate(rate);
        popt.ewc = &term;
      }
      PhaseOutcome d2 = train_phase(net, SetGuard(&task.d2_train),
                                    {{kCurveD2, SetGuard(&task.d2_test)},
                                     {kCurveUnion, SetGuard(&task.union_test)}},
                                    popt);
      const Curve& d2_curve = d2.curves[0];
      const Curve& union_curve = d2.curves[1];
      rec.curves = {d2_curve, union_curve};
      rec.q_r_star = -1.0;
      for (const CurvePoint& p : d2_curve.points) rec.q_r_star = std::max(rec.q_r_star, p.acc);
      const std::size_t stop = stop_point_index(d2_curve);
      rec.t_e = d2_curve.points[stop].iter - opt.t_max;
      rec.q = union_curve.points[stop].acc;
      rec.best_iter = union_curve.points[stop].iter;
    } catch (const std::runtime_error& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    if (store) {
      store->save_run(rec);
      store->progress("phase2 eps2=" + format_double(rate) + ": " +
                      (rec.failed ? "failed"
                                  : "q=" + format_double(rec.q) +
                                        " (t_E=" + std::to_string(rec.t_e) + ")"));
    }
  });

  ExperimentOutcome out;
  out.runs = std::move(p1_records);
  out.runs.insert(out.runs.end(), p2_records.begin(), p2_records.end());
  const RunRecord* best = best_record(out.runs, "phase2");
  if (!best) throw AllRunsFailed("realistic_eval: every retraining run failed");
  out.q_star = best->q;
  out.best_run = best->id;
  return out;
}

}  // namespace cfb
