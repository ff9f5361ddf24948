#include "cfb/record_io.hpp"

#include "json.hpp"

#include <fstream>
#include <iostream>
#include <mutex>

namespace cfb {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor<Real>& t) {
  json j;
  j["shape"] = t.shape();
  std::vector<double> data(static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i) data[static_cast<std::size_t>(i)] = double(t[i]);
  j["data"] = std::move(data);
  return j;
}

Tensor<Real> tensor_from_json(const json& j) {
  Shape shape = j.at("shape").get<Shape>();
  const auto& data = j.at("data");
  Tensor<Real> t(shape);
  if (static_cast<Index>(data.size()) != t.size())
    throw std::runtime_error("tensor: data length does not match shape");
  for (Index i = 0; i < t.size(); ++i)
    t[i] = static_cast<Real>(data[static_cast<std::size_t>(i)].get<double>());
  return t;
}

json layer_to_json(const LayerSpec& layer) {
  json j;
  j["kind"] = layer_kind_name(layer);
  if (const auto* fc = std::get_if<FullyConnected>(&layer)) {
    j["in"] = fc->in_dim;
    j["out"] = fc->out_dim;
  } else if (const auto* cv = std::get_if<Conv>(&layer)) {
    j["filters"] = cv->filters;
    j["kernel"] = cv->kernel;
    j["stride"] = cv->stride;
    j["pad"] = cv->pad;
  } else if (const auto* mp = std::get_if<MaxPool>(&layer)) {
    j["window"] = mp->window;
  } else if (const auto* dp = std::get_if<Dropout>(&layer)) {
    j["rate"] = dp->rate;
  } else if (const auto* lw = std::get_if<Lwta>(&layer)) {
    j["block_size"] = lw->block_size;
  } else if (const auto* sm = std::get_if<SoftmaxReadout>(&layer)) {
    j["classes"] = sm->num_classes;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "FullyConnected")
    return FullyConnected{j.at("in").get<Index>(), j.at("out").get<Index>()};
  if (kind == "Conv")
    return Conv{j.at("filters").get<Index>(), j.at("kernel").get<Index>(),
                j.at("stride").get<Index>(), j.at("pad").get<Index>()};
  if (kind == "MaxPool") return MaxPool{j.at("window").get<Index>()};
  if (kind == "ReLU") return Relu{};
  if (kind == "Dropout") return Dropout{j.at("rate").get<double>()};
  if (kind == "LWTA") return Lwta{j.at("block_size").get<Index>()};
  if (kind == "SoftmaxReadout") return SoftmaxReadout{j.at("classes").get<Index>()};
  throw std::runtime_error("unknown layer kind '" + kind + "'");
}

json hp_to_json(const HyperParams& hp) {
  return {{"family", family_name(hp.family)},
          {"hidden_layers", hp.hidden_layers},
          {"layer_size", hp.layer_size},
          {"eps_d1", hp.eps_d1},
          {"eps_d2", hp.eps_d2}};
}

HyperParams hp_from_json(const json& j) {
  HyperParams hp;
  hp.family = parse_family(j.at("family").get<std::string>());
  hp.hidden_layers = j.at("hidden_layers").get<int>();
  hp.layer_size = j.at("layer_size").get<int>();
  hp.eps_d1 = j.at("eps_d1").get<double>();
  hp.eps_d2 = j.at("eps_d2").get<double>();
  return hp;
}

json curve_to_json(const Curve& c) {
  json pts = json::array();
  for (const CurvePoint& p : c.points) pts.push_back({p.iter, p.acc});
  return {{"name", c.name}, {"points", std::move(pts)}};
}

Curve curve_from_json(const json& j) {
  Curve c;
  c.name = j.at("name").get<std::string>();
  for (const auto& p : j.at("points"))
    c.points.push_back({p.at(0).get<long>(), p.at(1).get<double>()});
  return c;
}

void write_text_atomic(const std::filesystem::path& file, const std::string& text) {
  std::filesystem::create_directories(file.parent_path());
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, file);
}

json load_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  json j;
  in >> j;
  return j;
}

}  // namespace

std::filesystem::path run_record_path(const std::filesystem::path& out_dir,
                                      const std::string& run_id) {
  return out_dir / "runs" / (run_id + ".json");
}

std::filesystem::path run_curves_path(const std::filesystem::path& out_dir,
                                      const std::string& run_id) {
  return out_dir / "runs" / (run_id + ".csv");
}

std::filesystem::path summary_path(const std::filesystem::path& out_dir,
                                   const std::string& experiment_id) {
  return out_dir / ("summary-" + experiment_id + ".json");
}

std::string curves_csv(const RunRecord& rec) {
  std::string csv = "iteration,curve_name,accuracy\n";
  for (const Curve& c : rec.curves)
    for (const CurvePoint& p : c.points)
      csv += std::to_string(p.iter) + "," + c.name + "," + format_double(p.acc) + "\n";
  return csv;
}

void write_run_record(const std::filesystem::path& out_dir, const RunRecord& rec) {
  json j;
  j["record"] = "run";
  j["id"] = rec.id;
  j["descriptor"] = rec.descriptor;
  j["role"] = rec.role;
  j["hyperparams"] = hp_to_json(rec.hp);
  j["seed"] = rec.seed;
  j["t_max"] = rec.t_max;
  j["eval_every"] = rec.eval_every;
  j["batch_size"] = rec.batch_size;
  j["failed"] = rec.failed;
  j["error"] = rec.error;
  j["q"] = rec.q;
  j["best_iter"] = rec.best_iter;
  j["q_r_star"] = rec.q_r_star;
  j["t_e"] = rec.t_e;
  json curves = json::array();
  for (const Curve& c : rec.curves) curves.push_back(curve_to_json(c));
  j["curves"] = std::move(curves);

  write_text_atomic(run_record_path(out_dir, rec.id), j.dump(2) + "\n");
  write_text_atomic(run_curves_path(out_dir, rec.id), curves_csv(rec));
}

RunRecord read_run_record(const std::filesystem::path& file) {
  const json j = load_json(file);
  if (j.value("record", "") != "run")
    throw std::runtime_error(file.string() + " is not a run record");
  RunRecord rec;
  rec.id = j.at("id").get<std::string>();
  rec.descriptor = j.at("descriptor").get<std::string>();
  rec.role = j.at("role").get<std::string>();
  rec.hp = hp_from_json(j.at("hyperparams"));
  rec.seed = j.at("seed").get<std::uint64_t>();
  rec.t_max = j.at("t_max").get<long>();
  rec.eval_every = j.at("eval_every").get<long>();
  rec.batch_size = j.at("batch_size").get<Index>();
  rec.failed = j.at("failed").get<bool>();
  rec.error = j.at("error").get<std::string>();
  rec.q = j.at("q").get<double>();
  rec.best_iter = j.at("best_iter").get<long>();
  rec.q_r_star = j.at("q_r_star").get<double>();
  rec.t_e = j.at("t_e").get<long>();
  for (const auto& c : j.at("curves")) rec.curves.push_back(curve_from_json(c));
  return rec;
}

void write_summary(const std::filesystem::path& out_dir, const ExperimentSummary& summary) {
  json j;
  j["record"] = "experiment_summary";
  j["id"] = summary.id;
  j["descriptor"] = summary.descriptor;
  j["model"] = summary.model;
  j["task"] = summary.task;
  j["paradigm"] = summary.paradigm;
  j["seed"] = summary.seed;
  j["t_max"] = summary.t_max;
  j["eval_every"] = summary.eval_every;
  j["batch_size"] = summary.batch_size;
  j["chance"] = summary.chance;
  j["q_star"] = summary.q_star;
  j["best_run"] = summary.best_run;
  json runs = json::array();
  for (const RunBrief& r : summary.runs)
    runs.push_back({{"id", r.id},
                    {"role", r.role},
                    {"hyperparams", hp_to_json(r.hp)},
                    {"q", r.q},
                    {"t_e", r.t_e},
                    {"failed", r.failed}});
  j["runs"] = std::move(runs);
  write_text_atomic(summary_path(out_dir, summary.id), j.dump(2) + "\n");
}

ExperimentSummary read_summary(const std::filesystem::path& file) {
  const json j = load_json(file);
  if (j.value("record", "") != "experiment_summary")
    throw std::runtime_error(file.string() + " is not an experiment summary");
  ExperimentSummary s;
  s.id = j.at("id").get<std::string>();
  s.descriptor = j.at("descriptor").get<std::string>();
  s.model = j.at("model").get<std::string>();
  s.task = j.at("task").get<std::string>();
  s.paradigm = j.at("paradigm").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.t_max = j.at("t_max").get<long>();
  s.eval_every = j.at("eval_every").get<long>();
  s.batch_size = j.at("batch_size").get<Index>();
  s.chance = j.at("chance").get<double>();
  s.q_star = j.at("q_star").get<double>();
  s.best_run = j.at("best_run").get<std::string>();
  for (const auto& r : j.at("runs")) {
    RunBrief b;
    b.id = r.at("id").get<std::string>();
    b.role = r.at("role").get<std::string>();
    b.hp = hp_from_json(r.at("hyperparams"));
    b.q = r.at("q").get<double>();
    b.t_e = r.at("t_e").get<long>();
    b.failed = r.at("failed").get<bool>();
    s.runs.push_back(std::move(b));
  }
  return s;
}

void write_selected_model(const std::filesystem::path& out_dir, const std::string& key,
                          const SelectedModel& model) {
  json j;
  j["record"] = "selected_model";
  j["key"] = key;
  j["run_id"] = model.run_id;
  j["iter"] = model.iter;
  j["q"] = model.q;
  json spec;
  spec["input_shape"] = model.state.spec.input_shape;
  json layers = json::array();
  for (const LayerSpec& l : model.state.spec.layers) layers.push_back(layer_to_json(l));
  spec["layers"] = std::move(layers);
  j["spec"] = std::move(spec);
  json params = json::array();
  for (const auto& p : model.state.params) params.push_back(tensor_to_json(p));
  j["params"] = std::move(params);
  if (model.fisher) {
    json fisher = json::array();
    for (const auto& f : model.fisher->diag) fisher.push_back(tensor_to_json(f));
    j["fisher"] = std::move(fisher);
  }
  write_text_atomic(out_dir / "models" / ("selected-" + hash_hex(key) + ".json"),
                    j.dump() + "\n");
}

std::optional<SelectedModel> read_selected_model(const std::filesystem::path& out_dir,
                                                 const std::string& key) {
  const auto file = out_dir / "models" / ("selected-" + hash_hex(key) + ".json");
  if (!std::filesystem::exists(file)) return std::nullopt;
  const json j = load_json(file);
  if (j.value("record", "") != "selected_model" || j.value("key", "") != key)
    return std::nullopt;

  SelectedModel model;
  model.run_id = j.at("run_id").get<std::string>();
  model.iter = j.at("iter").get<long>();
  model.q = j.at("q").get<double>();

  NetworkSpec spec;
  spec.input_shape = j.at("spec").at("input_shape").get<Shape>();
  for (const auto& l : j.at("spec").at("layers")) spec.layers.push_back(layer_from_json(l));
  model.state = init_network<Real>(spec, 0);  // topology bookkeeping; params replaced below
  const auto& params = j.at("params");
  if (params.size() != model.state.params.size())
    throw std::runtime_error("selected model: parameter count mismatch");
  for (std::size_t i = 0; i < model.state.params.size(); ++i) {
    Tensor<Real> t = tensor_from_json(params[i]);
    if (!t.same_shape(model.state.params[i]))
      throw std::runtime_error("selected model: parameter shape mismatch");
    model.state.params[i] = std::move(t);
    model.state.momentum[i].set_zero();
  }
  if (j.contains("fisher")) {
    FisherDiag<Real> fisher;
    for (const auto& f : j.at("fisher")) fisher.diag.push_back(tensor_from_json(f));
    if (fisher.diag.size() != model.state.params.size())
      throw std::runtime_error("selected model: fisher count mismatch");
    model.fisher = std::move(fisher);
  }
  return model;
}

RecordScan scan_records(const std::filesystem::path& dir) {
  RecordScan scan;
  if (!std::filesystem::exists(dir)) {
    scan.errors.push_back(dir.string() + ": no such directory");
    return scan;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("summary-", 0) == 0 && entry.path().extension() == ".json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      scan.summaries.push_back(read_summary(file));
    } catch (const std::exception& e) {
      scan.errors.push_back(file.string() + ": " + e.what());
    }
  }
  return scan;
}

FileRunStore::FileRunStore(std::filesystem::path out_dir, bool resume, bool verbose)
    : dir_(std::move(out_dir)), resume_(resume), verbose_(verbose) {}

std::optional<RunRecord> FileRunStore::load_run(const std::string& id) {
  if (!resume_) return std::nullopt;
  const auto file = run_record_path(dir_, id);
  if (!std::filesystem::exists(file)) return std::nullopt;
  try {
    RunRecord rec = read_run_record(file);
    if (rec.id != id) return std::nullopt;
    return rec;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable record: recompute
  }
}

void FileRunStore::save_run(const RunRecord& rec) { write_run_record(dir_, rec); }

std::optional<SelectedModel> FileRunStore::load_selected(const std::string& key) {
  if (!resume_) return std::nullopt;
  try {
    return read_selected_model(dir_, key);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void FileRunStore::save_selected(const std::string& key, const SelectedModel& model) {
  write_selected_model(dir_, key, model);
}

void FileRunStore::progress(const std::string& line) {
  if (!verbose_) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << line << "\n";
}

}  // namespace cfb
