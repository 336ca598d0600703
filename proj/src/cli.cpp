#include "expertnet/cli.hpp"

#include "expertnet/bounds.hpp"
#include "expertnet/clustering.hpp"
#include "expertnet/errors.hpp"
#include "expertnet/metrics.hpp"
#include "expertnet/model_bounds.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

namespace expertnet::cli {

namespace {

using checkpoint::Json;
namespace fs = std::filesystem;

// Bad flags or config contents; maps to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "NA"; }

Json read_json_file(const std::string& path) {
    try {
        return Json::parse(data::read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError(path + ": " + e.what());
    } catch (const IoError& e) {
        throw UsageError(e.what());
    }
}

void write_file(const std::string& path, const std::string& text) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    data::write_text_file(path, text);
}

// Output either to a file or to the command's stdout stream.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-")
        out << text;
    else
        write_file(path, text);
}

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("cannot parse '" + item + "' as a number");
        }
    }
    if (out.empty()) throw UsageError("empty value list");
    return out;
}

// --- shared flag set -------------------------------------------------------

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    int k = 0;
    double beta = 0.0, gamma = 0.0, delta = 0.0;
    bool hard_predict = false;
    bool no_sampling = false;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* k_opt = nullptr;
    CLI::Option* beta_opt = nullptr;
    CLI::Option* gamma_opt = nullptr;
    CLI::Option* delta_opt = nullptr;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        seed_opt = app->add_option("--seed", seed, "seed for splitting and training");
        app->add_option("--out", out, "output directory or file");
        k_opt = app->add_option("--k", k, "number of clusters / experts")->check(CLI::PositiveNumber);
        beta_opt = app->add_option("--beta", beta, "clustering loss weight")->check(CLI::NonNegativeNumber);
        gamma_opt = app->add_option("--gamma", gamma, "supervised loss weight")->check(CLI::NonNegativeNumber);
        delta_opt = app->add_option("--delta", delta, "balance loss weight")->check(CLI::NonNegativeNumber);
        app->add_flag("--hard-predict", hard_predict, "route each point to its argmax expert at prediction");
        app->add_flag("--no-sampling", no_sampling, "argmax cohorts instead of sampled cohorts during training");
    }
};

struct DataFlags {
    std::string path;
    std::string label_column;
    std::string group_column;
    std::vector<std::string> ignore;
    bool impute = false;
    CLI::Option* impute_opt = nullptr;

    void attach(CLI::App* app) {
        app->add_option("--data", path, "CSV file (.gz accepted)");
        app->add_option("--label-column", label_column, "label column name");
        app->add_option("--group-column", group_column, "integer ground-truth cluster column (kept out of the features)");
        app->add_option("--ignore", ignore, "column to leave out of the features (repeatable)");
        impute_opt = app->add_flag("--impute", impute, "mean-impute missing cells instead of dropping rows");
    }

    void apply(DataOptions& d) const {
        if (!path.empty()) d.path = path;
        if (!label_column.empty()) d.label_column = label_column;
        if (!group_column.empty()) d.group_column = group_column;
        if (!ignore.empty()) d.ignore_columns = ignore;
        if (impute_opt->count()) d.impute = impute;
    }
};

RunConfig resolve(const CommonFlags& common, const DataFlags& dflags) {
    RunConfig rc;
    if (!common.config_path.empty()) apply_run_config_json(read_json_file(common.config_path), rc);
    if (common.seed_opt->count()) {
        rc.train.seed = common.seed;
        rc.split.seed = common.seed;
    }
    if (!common.out.empty()) rc.out = common.out;
    if (common.k_opt->count()) rc.train.k = common.k;
    if (common.beta_opt->count()) rc.train.beta = common.beta;
    if (common.gamma_opt->count()) rc.train.gamma = common.gamma;
    if (common.delta_opt->count()) rc.train.delta = common.delta;
    if (common.hard_predict) rc.train.weighting_at_predict = false;
    if (common.no_sampling) rc.train.sampling_at_train = false;
    dflags.apply(rc.data);
    rc.validate();
    return rc;
}

// --- report writers ----------------------------------------------------------

std::string history_csv(const trainer::TrainedModel& m) {
    std::string s = "epoch,L_r,L_c,L_s,L_bal,total,val_auc,val_f1,sub_iters,rate\n";
    for (const auto& r : m.history)
        s += std::to_string(r.epoch) + ',' + num(r.l_r) + ',' + num(r.l_c) + ',' + num(r.l_s) + ',' + num(r.l_bal) +
             ',' + num(r.total) + ',' + num(r.val_auc) + ',' + num(r.val_f1) + ',' + std::to_string(r.sub_iters) +
             ',' + num(r.rate) + '\n';
    return s;
}

std::string series_csv(const char* column, const std::vector<double>& values) {
    std::string s = std::string("epoch,") + column + '\n';
    for (std::size_t e = 0; e < values.size(); ++e) s += std::to_string(e) + ',' + num(values[e]) + '\n';
    return s;
}

Json report_json(const metrics::MetricsReport& r, const std::string& split) {
    Json j;
    j["split"] = split;
    j["rows"] = r.rows;
    j["k"] = r.k;
    j["hard_predict"] = r.hard_predict;
    j["auc"] = r.auc;
    j["f1"] = r.f1;
    j["silhouette"] = r.silhouette ? Json(*r.silhouette) : Json(nullptr);
    j["htfd_mean"] = r.htfd_mean ? Json(*r.htfd_mean) : Json(nullptr);
    j["htfd_per_cluster"] = r.htfd_per_cluster ? Json(*r.htfd_per_cluster) : Json(nullptr);
    j["adjusted_rand"] = r.adjusted_rand ? Json(*r.adjusted_rand) : Json(nullptr);
    return j;
}

std::string report_csv(const metrics::MetricsReport& r, const std::string& split) {
    return "split," + metrics::report_csv_header() + '\n' + split + ',' + metrics::report_csv_row(r) + '\n';
}

// --- data preparation --------------------------------------------------------

struct Prepared {
    data::Standardizer standardizer;
    data::Dataset train, val, test;
};

Prepared prepare(const data::Dataset& ds, const data::SplitSpec& spec) {
    auto [tr, va, te] = data::split(ds, spec);
    auto [st, trs] = data::standardize(tr);
    return {st, std::move(trs), st.apply(va), st.apply(te)};
}

data::Dataset load_for_model(const checkpoint::ModelBundle& bundle, const DataFlags& dflags, bool labels_optional) {
    DataOptions d;
    d.label_column = bundle.label_column;
    dflags.apply(d);
    if (d.path.empty()) throw UsageError("--data is required");
    auto csv = d.csv();
    csv.labels_optional = labels_optional;
    return align_to_model(data::load_csv(d.path, csv), bundle);
}

data::Dataset select_split(const data::Dataset& ds, const checkpoint::ModelBundle& bundle, const std::string& which) {
    if (which == "all") return ds;
    const auto idx = data::split_indices(ds.rows(), bundle.split);
    if (which == "train") return ds.subset(idx.train);
    if (which == "val") return ds.subset(idx.val);
    if (which == "test") return ds.subset(idx.test);
    throw UsageError("--split must be one of all, train, val, test");
}

// --- commands ----------------------------------------------------------------

int cmd_train(const CommonFlags& common, const DataFlags& dflags, std::ostream& out, std::ostream& err) {
    const RunConfig rc = resolve(common, dflags);
    if (rc.data.path.empty()) throw UsageError("no data path: pass --data or set data.path in the config");
    const auto ds = data::load_csv(rc.data.path, rc.data.csv());
    const auto prep = prepare(ds, rc.split);
    err << "train: " << prep.train.rows() << " train / " << prep.val.rows() << " val / " << prep.test.rows()
        << " test rows, " << ds.dims() << " features, " << ds.class_count() << " classes\n";

    const auto model = trainer::train(prep.train, prep.val, rc.train);

    checkpoint::ModelBundle bundle;
    bundle.model = model;
    bundle.standardizer = prep.standardizer;
    bundle.feature_names = ds.feature_names;
    bundle.class_names = ds.class_names;
    bundle.label_column = rc.data.label_column;
    bundle.split = rc.split;

    const fs::path dir(rc.out);
    fs::create_directories(dir);
    checkpoint::save(bundle, (dir / "checkpoint.json").string());
    write_file((dir / "config.json").string(), checkpoint::dump(run_config_to_json(rc)));
    write_file((dir / "history.csv").string(), history_csv(model));
    write_file((dir / "pretrain_history.csv").string(), series_csv("L_r", model.pretrain_history));
    write_file((dir / "finetune_history.csv").string(), series_csv("L_s", model.finetune_history));

    const auto report = trainer::evaluate(model, prep.val, rc.train.weighting_at_predict);
    write_file((dir / "val_metrics.csv").string(), report_csv(report, "val"));
    write_file((dir / "val_metrics.json").string(), checkpoint::dump(report_json(report, "val")));

    out << "best epoch " << model.best_epoch << ", val AUC " << num(report.auc) << ", val F1 " << num(report.f1)
        << "\nwrote " << (dir / "checkpoint.json").string() << '\n';
    return kOk;
}

struct EvalFlags {
    std::string checkpoint;
    std::string split = "test";
    std::string json_path;
};

int cmd_eval(const CommonFlags& common, const DataFlags& dflags, const EvalFlags& ef, std::ostream& out,
             std::ostream& err) {
    const auto bundle = checkpoint::load(ef.checkpoint);
    const auto all = load_for_model(bundle, dflags, false);
    const auto part = bundle.standardizer.apply(select_split(all, bundle, ef.split));
    const bool weighted = common.hard_predict ? false : bundle.model.config.weighting_at_predict;
    const auto report = trainer::evaluate(bundle.model, part, weighted);
    if (!report.silhouette && report.k >= 2) err << "eval: silhouette undefined on this split\n";
    emit(common.out, report_csv(report, ef.split), out);
    if (!ef.json_path.empty()) write_file(ef.json_path, checkpoint::dump(report_json(report, ef.split)));
    return kOk;
}

int cmd_predict(const CommonFlags& common, const DataFlags& dflags, const std::string& ckpt, std::ostream& out) {
    const auto bundle = checkpoint::load(ckpt);
    const auto& model = bundle.model;
    const auto ds = bundle.standardizer.apply(load_for_model(bundle, dflags, true));
    const bool weighted = common.hard_predict ? false : model.config.weighting_at_predict;

    const Matrix z = trainer::encode(model, ds.features);
    const Matrix q = clustering::soft_assign(z, model.centroids);
    const Matrix probs = experts::predict_batch(q, trainer::expert_probabilities(model, z), weighted);
    const auto pred = metrics::argmax_rows(probs);
    const auto cluster = clustering::hard_assignments(q);

    std::string s = "row,prediction";
    for (const auto& c : bundle.class_names) s += ",p_" + c;
    s += ",cluster";
    for (std::size_t j = 0; j < model.k(); ++j) s += ",q_" + std::to_string(j);
    s += '\n';
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        s += std::to_string(i) + ',' + bundle.class_names[static_cast<std::size_t>(pred[static_cast<std::size_t>(i)])];
        for (Eigen::Index c = 0; c < probs.cols(); ++c) s += ',' + num(probs(i, c));
        s += ',' + std::to_string(cluster[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < q.cols(); ++j) s += ',' + num(q(i, j));
        s += '\n';
    }
    emit(common.out, s, out);
    return kOk;
}

struct SweepFlags {
    std::string parameter;
    std::string values;
    int seeds = 5;
    bool synth = false;
};

int cmd_sweep(const CommonFlags& common, const DataFlags& dflags, const SweepFlags& sf, std::ostream& out,
              std::ostream& err) {
    const RunConfig rc = resolve(common, dflags);
    const auto& p = sf.parameter;
    if (p != "beta" && p != "gamma" && p != "delta" && p != "k")
        throw UsageError("--param must be one of beta, gamma, delta, k");
    const auto values = parse_number_list(sf.values);
    if (p == "k")
        for (double v : values)
            if (v < 1 || v != std::floor(v)) throw UsageError("k values must be positive integers");
    if (sf.seeds < 1) throw UsageError("--seeds must be >= 1");

    data::Dataset ds;
    if (sf.synth) {
        data::SynthParams sp;
        sp.seed = rc.train.seed;
        ds = data::synth_heterogeneous(sp).data;
    } else {
        if (rc.data.path.empty()) throw UsageError("no data: pass --data, set data.path, or use --synth");
        ds = data::load_csv(rc.data.path, rc.data.csv());
    }

    std::string s = "parameter,value,seed,auc,f1,sil,htfd,status\n";
    for (double v : values) {
        std::vector<metrics::MetricsReport> ok;
        for (int r = 0; r < sf.seeds; ++r) {
            RunConfig run = rc;
            const std::uint64_t seed = rc.train.seed + static_cast<std::uint64_t>(r);
            run.train.seed = seed;
            run.split.seed = seed;
            if (p == "k") {
                run.train.k = static_cast<int>(v);
            } else {
                // vary one weight, zero the other two
                run.train.beta = p == "beta" ? v : 0.0;
                run.train.gamma = p == "gamma" ? v : 0.0;
                run.train.delta = p == "delta" ? v : 0.0;
            }
            s += p + ',' + num(v) + ',' + std::to_string(seed) + ',';
            try {
                run.validate();
                const auto prep = prepare(ds, run.split);
                const auto model = trainer::train(prep.train, prep.val, run.train);
                const auto rep = trainer::evaluate(model, prep.test, run.train.weighting_at_predict);
                s += num(rep.auc) + ',' + num(rep.f1) + ',' + opt_num(rep.silhouette) + ',' + opt_num(rep.htfd_mean) +
                     ",ok\n";
                ok.push_back(rep);
            } catch (const std::exception& e) {
                std::string msg = e.what();
                std::replace(msg.begin(), msg.end(), ',', ';');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                s += "NA,NA,NA,NA,failed: " + msg + '\n';
                err << "sweep: " << p << '=' << num(v) << " seed " << seed << " failed: " << e.what() << '\n';
            }
        }
        s += p + ',' + num(v) + ",mean,";
        if (ok.empty()) {
            s += "NA,NA,NA,NA,0/" + std::to_string(sf.seeds) + " runs\n";
            continue;
        }
        auto mean_of = [&](auto get) -> std::optional<double> {
            double sum = 0.0;
            for (const auto& r : ok) {
                const std::optional<double> x = get(r);
                if (!x) return std::nullopt;
                sum += *x;
            }
            return sum / static_cast<double>(ok.size());
        };
        s += opt_num(mean_of([](const auto& r) { return std::optional<double>(r.auc); })) + ',' +
             opt_num(mean_of([](const auto& r) { return std::optional<double>(r.f1); })) + ',' +
             opt_num(mean_of([](const auto& r) { return r.silhouette; })) + ',' +
             opt_num(mean_of([](const auto& r) { return r.htfd_mean; })) + ',' + std::to_string(ok.size()) + '/' +
             std::to_string(sf.seeds) + " runs\n";
    }
    emit(common.out, s, out);
    return kOk;
}

Json bound_params_to_json(const bounds::BoundParams& p) {
    Json j;
    j["rho"] = p.rho;
    j["expert_depth"] = p.expert_depth;
    j["shared_depth"] = p.shared_depth;
    j["shared_norm_caps"] = p.shared_norm_caps;
    j["expert_norm_caps"] = p.expert_norm_caps;
    j["input_bounds"] = p.input_bounds;
    j["sample_count"] = p.sample_count;
    j["delta"] = p.delta;
    j["class_count"] = p.class_count;
    return j;
}

bounds::BoundParams bound_params_from_json(const Json& j) {
    bounds::BoundParams p;
    if (!j.is_object()) throw UsageError("bound parameters must be a JSON object");
    const Json known = bound_params_to_json(p);
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw UsageError("unknown bound parameter '" + key + "'");
    try {
        if (j.contains("rho")) p.rho = j["rho"].get<double>();
        if (j.contains("expert_depth")) p.expert_depth = j["expert_depth"].get<int>();
        if (j.contains("shared_depth")) p.shared_depth = j["shared_depth"].get<int>();
        if (j.contains("shared_norm_caps")) p.shared_norm_caps = j["shared_norm_caps"].get<std::vector<double>>();
        if (j.contains("expert_norm_caps"))
            p.expert_norm_caps = j["expert_norm_caps"].get<std::vector<std::vector<double>>>();
        if (j.contains("input_bounds")) p.input_bounds = j["input_bounds"].get<std::vector<double>>();
        if (j.contains("sample_count")) p.sample_count = j["sample_count"].get<double>();
        if (j.contains("delta")) p.delta = j["delta"].get<double>();
        if (j.contains("class_count")) p.class_count = j["class_count"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bound parameters: ") + e.what());
    }
    return p;
}

struct BoundFlags {
    std::string checkpoint;
    std::string params;
    std::string split = "train";
    std::string axis = "none";
    int k_max = 8;
    std::string n_values = "100,10000,1000000";
    std::string k_mode = "budget";
    std::string dump_params;
    double rho = 1.0;
    double delta = 0.05;
    CLI::Option* rho_opt = nullptr;
    CLI::Option* delta_opt = nullptr;
};

int cmd_bound(const CommonFlags& common, const DataFlags& dflags, const BoundFlags& bf, std::ostream& out,
              std::ostream& err) {
    if (!bf.checkpoint.empty() && !bf.params.empty()) throw UsageError("give either --checkpoint or --params, not both");
    bounds::BoundParams params;
    if (!bf.checkpoint.empty()) {
        const auto bundle = checkpoint::load(bf.checkpoint);
        const auto all = load_for_model(bundle, dflags, true);
        const auto part = bundle.standardizer.apply(select_split(all, bundle, bf.split));
        const auto mb = bounds::bound_from_model(bundle.model, part.features, bf.rho, bf.delta);
        for (const auto& w : mb.warnings) err << "bound: warning: " << w << '\n';
        params = mb.params;
    } else if (!bf.params.empty()) {
        params = bound_params_from_json(read_json_file(bf.params));
    } else {
        // one cluster, unit norms, N = 100, delta = 0.1
        params.shared_norm_caps = {1.0};
        params.expert_norm_caps = {{1.0}};
        params.input_bounds = {1.0};
        params.sample_count = 100.0;
        params.delta = 0.1;
    }
    if (bf.rho_opt->count()) params.rho = bf.rho;
    if (bf.delta_opt->count()) params.delta = bf.delta;
    try {
        params.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(std::string("bound parameters: ") + e.what());
    }
    if (!bf.dump_params.empty()) write_file(bf.dump_params, checkpoint::dump(bound_params_to_json(params)));

    std::string s;
    auto row = [&](const std::string& lead, const bounds::GapBound& g) {
        s += lead + ',' + num(g.complexity) + ',' + num(g.confidence) + ',' + num(g.total) + '\n';
    };
    if (bf.axis == "none") {
        s = "k,n,complexity,confidence,total\n";
        row(std::to_string(params.k()) + ',' + num(params.sample_count), bounds::bound_uniform(params));
    } else if (bf.axis == "k") {
        bounds::KSweepMode mode;
        if (bf.k_mode == "budget")
            mode = bounds::KSweepMode::FixedBudget;
        else if (bf.k_mode == "per-cluster")
            mode = bounds::KSweepMode::FixedPerCluster;
        else
            throw UsageError("--k-mode must be budget or per-cluster");
        err << "bound: k sweep with " << (mode == bounds::KSweepMode::FixedBudget ? "fixed total budget" : "fixed per-cluster norms")
            << '\n';
        s = "k,complexity,confidence,total\n";
        for (const auto& r : bounds::sweep_k(params, bf.k_max, mode)) row(std::to_string(static_cast<int>(r.axis)), r.gap);
    } else if (bf.axis == "n") {
        s = "n,complexity,confidence,total\n";
        const auto ns = parse_number_list(bf.n_values);
        for (double n : ns)
            if (!(n >= 1.0)) throw UsageError("sample counts must be >= 1");
        for (const auto& r : bounds::sweep_n(params, ns)) row(num(r.axis), r.gap);
    } else {
        throw UsageError("--axis must be none, k or n");
    }
    emit(common.out, s, out);
    return kOk;
}

int cmd_synth(const CommonFlags& common, const data::SynthParams& base, std::ostream& out) {
    if (common.out.empty()) throw UsageError("synth needs --out");
    data::SynthParams sp = base;
    if (common.seed_opt->count()) sp.seed = common.seed;
    try {
        sp.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const auto sd = data::synth_heterogeneous(sp);
    const fs::path parent = fs::path(common.out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    data::save_csv(sd.data, common.out, "label", "cluster");
    Json meta;
    meta["generator"] = "synth_heterogeneous";
    meta["k_true"] = sp.k_true;
    meta["n_per_cluster"] = sp.n_per_cluster;
    meta["dim"] = sp.dim;
    meta["separation"] = sp.separation;
    meta["flip_noise"] = sp.flip_noise;
    meta["seed"] = sp.seed;
    meta["rows"] = sd.data.rows();
    meta["label_column"] = "label";
    meta["group_column"] = "cluster";
    data::write_text_file(common.out + ".meta.json", checkpoint::dump(meta));
    out << "wrote " << sd.data.rows() << " rows to " << common.out << '\n';
    return kOk;
}

}  // namespace

data::CsvOptions DataOptions::csv() const {
    data::CsvOptions o;
    o.label_column = label_column;
    o.group_column = group_column;
    o.ignore_columns = ignore_columns;
    o.missing = impute ? data::MissingPolicy::MeanImpute : data::MissingPolicy::Drop;
    return o;
}

void RunConfig::validate() const {
    try {
        train.validate();
        split.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    if (!data.path.empty() && !fs::exists(data.path)) throw UsageError("data file '" + data.path + "' does not exist");
}

Json run_config_to_json(const RunConfig& c) {
    Json j;
    j["seed"] = c.train.seed;
    j["out"] = c.out;
    j["data"] = {{"path", c.data.path},
                 {"label_column", c.data.label_column},
                 {"group_column", c.data.group_column},
                 {"ignore_columns", c.data.ignore_columns},
                 {"impute", c.data.impute}};
    j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
    Json t = checkpoint::config_to_json(c.train);
    t.erase("seed");
    j["train"] = std::move(t);
    return j;
}

void apply_run_config_json(const Json& j, RunConfig& c) {
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "seed") {
                c.train.seed = value.get<std::uint64_t>();
                c.split.seed = c.train.seed;
            } else if (key == "out") {
                c.out = value.get<std::string>();
            } else if (key == "data") {
                for (const auto& [dk, dv] : value.items()) {
                    if (dk == "path")
                        c.data.path = dv.get<std::string>();
                    else if (dk == "label_column")
                        c.data.label_column = dv.get<std::string>();
                    else if (dk == "group_column")
                        c.data.group_column = dv.get<std::string>();
                    else if (dk == "ignore_columns")
                        c.data.ignore_columns = dv.get<std::vector<std::string>>();
                    else if (dk == "impute")
                        c.data.impute = dv.get<bool>();
                    else
                        throw UsageError("unknown data option '" + dk + "'");
                }
            } else if (key == "split") {
                for (const auto& [sk, sv] : value.items()) {
                    if (sk == "train")
                        c.split.train = sv.get<double>();
                    else if (sk == "val")
                        c.split.val = sv.get<double>();
                    else if (sk == "test")
                        c.split.test = sv.get<double>();
                    else
                        throw UsageError("unknown split option '" + sk + "'");
                }
            } else if (key == "train") {
                if (value.contains("seed")) throw UsageError("set the seed at the top level of the config");
                checkpoint::apply_config_json(value, c.train);
            } else {
                throw UsageError("unknown config section '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    } catch (const ParseError& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
}

data::Dataset align_to_model(const data::Dataset& raw, const checkpoint::ModelBundle& bundle) {
    data::Dataset out;
    out.features.resize(raw.features.rows(), static_cast<Eigen::Index>(bundle.feature_names.size()));
    for (std::size_t f = 0; f < bundle.feature_names.size(); ++f) {
        const auto it = std::find(raw.feature_names.begin(), raw.feature_names.end(), bundle.feature_names[f]);
        if (it == raw.feature_names.end())
            throw ShapeError("data has no column '" + bundle.feature_names[f] + "' required by the model");
        out.features.col(static_cast<Eigen::Index>(f)) = raw.features.col(it - raw.feature_names.begin());
    }
    out.feature_names = bundle.feature_names;
    out.class_names = bundle.class_names;
    out.groups = raw.groups;
    out.labeled = raw.labeled;
    out.labels.reserve(raw.rows());
    for (int y : raw.labels) {
        if (!raw.labeled) {
            out.labels.push_back(0);
            continue;
        }
        const auto& name = raw.class_names[static_cast<std::size_t>(y)];
        const auto it = std::find(bundle.class_names.begin(), bundle.class_names.end(), name);
        if (it == bundle.class_names.end()) throw ParseError("label '" + name + "' was not seen in training");
        out.labels.push_back(static_cast<int>(it - bundle.class_names.begin()));
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Joint deep clustering with cluster-local expert classifiers", "expertnet"};
    app.require_subcommand(1);

    // one flag set per subcommand: the option handles read back in resolve()
    // must belong to the subcommand that was parsed
    enum { kTrain, kEval, kPredict, kSweep, kBound, kSynth, kCommands };
    std::array<CommonFlags, kCommands> common;
    std::array<DataFlags, kCommands> dflags;

    auto* train = app.add_subcommand("train", "train a model and write checkpoint, history and validation metrics");
    common[kTrain].attach(train);
    dflags[kTrain].attach(train);

    EvalFlags ef;
    auto* eval = app.add_subcommand("eval", "metrics of a checkpoint on one split of a dataset");
    common[kEval].attach(eval);
    dflags[kEval].attach(eval);
    eval->add_option("--checkpoint", ef.checkpoint, "checkpoint.json from train")->required()->check(CLI::ExistingFile);
    eval->add_option("--split", ef.split, "all, train, val or test (split recomputed from the checkpoint)");
    eval->add_option("--json", ef.json_path, "also write the report as JSON");

    std::string predict_ckpt;
    auto* predict = app.add_subcommand("predict", "class probabilities and cluster memberships per row");
    common[kPredict].attach(predict);
    dflags[kPredict].attach(predict);
    predict->add_option("--checkpoint", predict_ckpt, "checkpoint.json from train")->required()->check(CLI::ExistingFile);

    SweepFlags sf;
    auto* sweep = app.add_subcommand("sweep", "train and evaluate over a grid of one hyperparameter and several seeds");
    common[kSweep].attach(sweep);
    dflags[kSweep].attach(sweep);
    sweep->add_option("--param", sf.parameter, "beta, gamma, delta or k")->required();
    sweep->add_option("--values", sf.values, "comma-separated values")->required();
    sweep->add_option("--seeds", sf.seeds, "runs per value (seeds seed, seed+1, ...)");
    sweep->add_flag("--synth", sf.synth, "use the default synthetic dataset instead of --data");

    BoundFlags bf;
    auto* bound = app.add_subcommand("bound", "generalization-gap terms, optionally swept over k or N");
    common[kBound].attach(bound);
    dflags[kBound].attach(bound);
    bound->add_option("--checkpoint", bf.checkpoint, "derive norms and input bounds from a trained model (needs --data)")
        ->check(CLI::ExistingFile);
    bound->add_option("--params", bf.params, "JSON file with explicit bound parameters")->check(CLI::ExistingFile);
    bound->add_option("--split", bf.split, "data split used with --checkpoint");
    bound->add_option("--axis", bf.axis, "none, k or n");
    bound->add_option("--k-max", bf.k_max, "largest k of a k sweep")->check(CLI::PositiveNumber);
    bound->add_option("--n-values", bf.n_values, "comma-separated sample counts of an n sweep");
    bound->add_option("--k-mode", bf.k_mode, "budget (sum_j B_j prod M^j fixed) or per-cluster (each B_j, M^j fixed)");
    bound->add_option("--dump-params", bf.dump_params, "write the parameters used as JSON");
    bf.rho_opt = bound->add_option("--rho", bf.rho, "margin");
    bf.delta_opt = bound->add_option("--delta-conf", bf.delta, "confidence level delta in (0, 1)");

    data::SynthParams sp;
    auto* synth = app.add_subcommand("synth", "write a synthetic heterogeneous-subpopulation dataset");
    common[kSynth].attach(synth);
    synth->add_option("--k-true", sp.k_true, "number of true clusters");
    synth->add_option("--n-per-cluster", sp.n_per_cluster, "rows per cluster");
    synth->add_option("--dim", sp.dim, "feature count");
    synth->add_option("--separation", sp.separation, "distance of cluster centres from the origin");
    synth->add_option("--flip-noise", sp.flip_noise, "label flip probability");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "expertnet: " << e.what() << '\n';
        if (e.get_exit_code() == 0) return kOk;
        err << "run 'expertnet --help' for usage\n";
        return kUsage;
    }

    try {
        if (*train) return cmd_train(common[kTrain], dflags[kTrain], out, err);
        if (*eval) return cmd_eval(common[kEval], dflags[kEval], ef, out, err);
        if (*predict) return cmd_predict(common[kPredict], dflags[kPredict], predict_ckpt, out);
        if (*sweep) return cmd_sweep(common[kSweep], dflags[kSweep], sf, out, err);
        if (*bound) return cmd_bound(common[kBound], dflags[kBound], bf, out, err);
        if (*synth) return cmd_synth(common[kSynth], sp, out);
    } catch (const UsageError& e) {
        err << "expertnet: " << e.what() << '\n';
        return kUsage;
    } catch (const InvalidArgument& e) {
        err << "expertnet: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        err << "expertnet: numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const ParseError& e) {
        err << "expertnet: data error: " << e.what() << '\n';
        return kData;
    } catch (const IoError& e) {
        err << "expertnet: data error: " << e.what() << '\n';
        return kData;
    } catch (const ShapeError& e) {
        err << "expertnet: data error: " << e.what() << '\n';
        return kData;
    } catch (const UndefinedMetric& e) {
        err << "expertnet: data error: " << e.what() << '\n';
        return kData;
    } catch (const fs::filesystem_error& e) {
        err << "expertnet: data error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace expertnet::cli
