// SPDX-License-Identifier: Apache-2.0
//
// csrtool: command-line front end for the CSR library. The subcommands cover
// the pipeline end to end: synthesize captures, plan layer merges, train
// offline dictionaries, compress captures into cache snapshots, evaluate
// fidelity and footprint, and run the ablation suite.
//
// Exit codes: 0 success, 2 invalid synthetic spec, 3 unreadable capture
// (merge-plan), 4 plan/capture mismatch (train), 5 index-space overflow
// (compress), 6 schema mismatch (eval), 1 anything else.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <csr/csr.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CaptureHandle {
    csr_capture* p = nullptr;
    ~CaptureHandle() { csr_capture_free(p); }
};
struct PlanHandle {
    csr_merge_plan* p = nullptr;
    ~PlanHandle() { csr_merge_plan_free(p); }
};
struct StoreHandle {
    csr_dict_store* p = nullptr;
    ~StoreHandle() { csr_dict_store_free(p); }
};
struct CacheHandle {
    csr_cache* p = nullptr;
    ~CacheHandle() { csr_cache_free(p); }
};
struct CString {
    char* p = nullptr;
    ~CString() { csr_string_free(p); }
    std::string str() const { return p == nullptr ? "" : p; }
};

int fail(const std::string& what, int code) {
    std::cerr << "error: " << what << ": " << csr_last_error() << "\n";
    return code;
}

bool write_text_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(static_cast<long long>(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) return false;
        out << text;
        out.flush();
        if (!out) return false;
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        return false;
    }
    return true;
}

bool ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    return fs::is_directory(dir);
}

// Resolved-config echo written into every run's output location.
bool write_config_echo(const fs::path& where, const std::string& command, json options) {
    json echo{{"command", command}, {"options", std::move(options)}};
    return write_text_atomic(where, echo.dump(2) + "\n");
}

std::optional<json> read_json_file(const std::string& path, std::string& err) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        err = "cannot open " + path;
        return std::nullopt;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) {
        err = "malformed json in " + path;
        return std::nullopt;
    }
    return j;
}

// --threads flag with CSR_THREADS as the environment fallback.
void apply_threads(const std::optional<int>& flag) {
    if (flag.has_value()) {
        csr_set_threads(*flag);
        return;
    }
    const char* env = std::getenv("CSR_THREADS");
    if (env != nullptr && env[0] != '\0') csr_set_threads(std::atoi(env));
}

// ---- synth ----

struct SynthOpts {
    std::string out;
    std::string config;
    std::optional<int> layers, heads, head_dim;
    std::optional<int64_t> tokens;
    std::optional<uint64_t> seed;
    std::optional<std::string> generator;
    std::optional<int> atoms, sparsity, components;
    std::optional<double> noise, spread, drift;
    std::optional<std::string> kind, rope, dtype, model;
};

int run_synth(const SynthOpts& o) {
    json spec = json::object();
    if (!o.config.empty()) {
        std::string err;
        auto loaded = read_json_file(o.config, err);
        if (!loaded) {
            std::cerr << "error: " << err << "\n";
            return 2;
        }
        spec = std::move(*loaded);
    }
    if (o.layers) spec["num_layers"] = *o.layers;
    if (o.heads) spec["num_heads"] = *o.heads;
    if (o.head_dim) spec["head_dim"] = *o.head_dim;
    if (o.tokens) spec["tokens_per_layer"] = *o.tokens;
    if (o.seed) spec["seed"] = *o.seed;
    if (o.kind) spec["kind"] = *o.kind;
    if (o.rope) spec["pre_rope"] = (*o.rope == "pre");
    if (o.dtype) spec["dtype"] = *o.dtype;
    if (o.model) spec["model_name"] = *o.model;

    bool gen_flag = o.generator || o.atoms || o.sparsity || o.noise || o.components ||
                    o.spread || o.drift;
    if (gen_flag || spec.contains("generator")) {
        json gen = spec.value("generator", json::object());
        if (o.generator) gen["type"] = *o.generator;
        if (!gen.contains("type")) gen["type"] = "planted_dictionary";
        if (o.atoms) gen["num_atoms"] = *o.atoms;
        if (o.sparsity) gen["sparsity"] = *o.sparsity;
        if (o.noise) gen["noise_sigma"] = *o.noise;
        if (o.components) gen["num_components"] = *o.components;
        if (o.spread) gen["spread"] = *o.spread;
        if (o.drift) gen["drift_rate"] = *o.drift;
        spec["generator"] = std::move(gen);
    }

    CaptureHandle cap;
    if (csr_capture_synth(spec.dump().c_str(), &cap.p) != CSR_OK) {
        return fail("invalid synthetic spec", 2);
    }
    if (csr_capture_write(cap.p, o.out.c_str()) != CSR_OK) return fail("writing capture", 1);

    CString info;
    if (csr_capture_info(cap.p, &info.p) != CSR_OK) return fail("capture info", 1);
    json echo_opts{{"spec", spec}, {"capture", json::parse(info.str())}};
    if (!write_config_echo(fs::path(o.out).concat(".config.json"), "synth", echo_opts)) {
        std::cerr << "error: cannot write config echo\n";
        return 1;
    }
    std::cout << "wrote " << o.out << "\n" << info.str() << "\n";
    return 0;
}

// ---- merge-plan ----

struct MergePlanOpts {
    std::string input;
    std::string out;
    double delta1 = 0.20;
    double delta2 = 1.0;
    std::string head = "pooled";
    int64_t sample_cap = 8192;
    uint64_t seed = 0;
};

int run_merge_plan(const MergePlanOpts& o) {
    CaptureHandle cap;
    if (csr_capture_read(o.input.c_str(), &cap.p) != CSR_OK) {
        return fail("reading capture " + o.input, 3);
    }

    json options{{"delta1", o.delta1},
                 {"delta2", o.delta2},
                 {"head", o.head},
                 {"sample_cap", o.sample_cap},
                 {"seed", o.seed}};
    PlanHandle plan;
    if (csr_merge_plan_build(cap.p, options.dump().c_str(), &plan.p) != CSR_OK) {
        return fail("building merge plan", 1);
    }

    CString plan_json;
    if (csr_merge_plan_to_json(plan.p, &plan_json.p) != CSR_OK) return fail("plan json", 1);
    if (!write_text_atomic(o.out, plan_json.str() + "\n")) {
        std::cerr << "error: cannot write " << o.out << "\n";
        return 1;
    }
    json echo_opts = options;
    echo_opts["input"] = o.input;
    if (!write_config_echo(fs::path(o.out).concat(".config.json"), "merge-plan", echo_opts)) {
        std::cerr << "error: cannot write config echo\n";
        return 1;
    }

    json groups = json::parse(plan_json.str())["groups"];
    std::cout << "plan: " << groups.size() << " group(s)\n";
    for (size_t g = 0; g < groups.size(); ++g) {
        std::cout << "  group " << g << ": layers " << groups[g].dump() << "\n";
    }
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

// ---- train ----

struct TrainOpts {
    std::string input;
    std::string plan;
    std::string out_dir;
    std::string config;
    std::optional<int> atoms, s, sn, epochs, batch, kmeans_iters, per_head_atoms;
    std::optional<double> lr, beta_cap, beta_scale, val_fraction;
    std::optional<uint64_t> seed;
    bool head_shared = false;
};

int run_train(const TrainOpts& o) {
    CaptureHandle cap;
    if (csr_capture_read(o.input.c_str(), &cap.p) != CSR_OK) {
        return fail("reading capture " + o.input, 1);
    }
    std::string err;
    auto plan_json = read_json_file(o.plan, err);
    if (!plan_json) {
        std::cerr << "error: " << err << "\n";
        return 1;
    }
    PlanHandle plan;
    if (csr_merge_plan_parse(plan_json->dump().c_str(), &plan.p) != CSR_OK) {
        return fail("parsing merge plan", 4);
    }

    json options = json::object();
    if (!o.config.empty()) {
        auto loaded = read_json_file(o.config, err);
        if (!loaded) {
            std::cerr << "error: " << err << "\n";
            return 1;
        }
        options = std::move(*loaded);
    }
    json train = options.value("train", json::object());
    if (o.atoms) train["num_atoms"] = *o.atoms;
    if (o.s) train["s_train"] = *o.s;
    if (o.sn) train["s_n"] = *o.sn;
    if (o.epochs) train["epochs"] = *o.epochs;
    if (o.batch) train["batch_size"] = *o.batch;
    if (o.lr) train["learning_rate"] = *o.lr;
    if (o.beta_cap) train["beta_cap"] = *o.beta_cap;
    if (o.beta_scale) train["beta_scale"] = *o.beta_scale;
    if (o.seed) train["seed"] = *o.seed;
    if (o.kmeans_iters) train["kmeans_iters"] = *o.kmeans_iters;
    options["train"] = std::move(train);
    if (o.per_head_atoms) options["per_head_atoms"] = *o.per_head_atoms;
    if (o.val_fraction) options["val_fraction"] = *o.val_fraction;
    if (o.head_shared) options["head_shared"] = true;

    if (!ensure_dir(o.out_dir)) {
        std::cerr << "error: cannot create output directory " << o.out_dir << "\n";
        return 1;
    }

    StoreHandle store;
    CString report;
    csr_status st = csr_train(cap.p, plan.p, options.dump().c_str(), &store.p, &report.p);
    if (st != CSR_OK) {
        int code = (st == CSR_ERR_FORMAT || st == CSR_ERR_SCHEMA_MISMATCH) ? 4 : 1;
        return fail("training", code);
    }

    fs::path dir(o.out_dir);
    if (csr_dict_store_save(store.p, (dir / "dict.csrd").c_str()) != CSR_OK) {
        return fail("writing dictionary store", 1);
    }
    if (!write_text_atomic(dir / "train_report.json", report.str() + "\n")) {
        std::cerr << "error: cannot write train report\n";
        return 1;
    }
    json echo_opts = options;
    echo_opts["input"] = o.input;
    echo_opts["plan"] = o.plan;
    if (!write_config_echo(dir / "config.json", "train", echo_opts)) {
        std::cerr << "error: cannot write config echo\n";
        return 1;
    }

    CString info;
    if (csr_dict_store_info(store.p, &info.p) != CSR_OK) return fail("store info", 1);
    std::cout << info.str() << "\nwrote " << (dir / "dict.csrd").string() << "\n";
    return 0;
}

// ---- compress ----

struct CompressOpts {
    std::string input;
    std::string dicts;
    std::string out_dir;
    int s = 8;
    std::optional<int> sn;
    std::optional<double> outlier_threshold;
    int64_t online_size = 0;
    uint64_t seed = 0;
};

int run_compress(const CompressOpts& o) {
    CaptureHandle cap;
    if (csr_capture_read(o.input.c_str(), &cap.p) != CSR_OK) {
        return fail("reading capture " + o.input, 1);
    }
    StoreHandle store;
    if (csr_dict_store_load(o.dicts.c_str(), &store.p) != CSR_OK) {
        return fail("reading dictionary store " + o.dicts, 1);
    }

    CString cap_info_s, store_info_s;
    if (csr_capture_info(cap.p, &cap_info_s.p) != CSR_OK) return fail("capture info", 1);
    if (csr_dict_store_info(store.p, &store_info_s.p) != CSR_OK) return fail("store info", 1);
    json cap_info = json::parse(cap_info_s.str());
    json store_info = json::parse(store_info_s.str());

    json codec{{"s", o.s},
               {"s_n", o.sn ? *o.sn : store_info["s_n"].get<int>()},
               {"head_dim", cap_info["head_dim"].get<int>()}};
    codec["outlier_threshold"] =
        o.outlier_threshold ? json(*o.outlier_threshold) : json(nullptr);
    json options{{"codec", codec}, {"online_size", o.online_size}, {"seed", o.seed}};

    if (!ensure_dir(o.out_dir)) {
        std::cerr << "error: cannot create output directory " << o.out_dir << "\n";
        return 1;
    }

    CacheHandle cache;
    csr_status st = csr_compress(cap.p, store.p, options.dump().c_str(), &cache.p);
    if (st != CSR_OK) {
        return fail("compressing", st == CSR_ERR_INDEX_SPACE_OVERFLOW ? 5 : 1);
    }

    fs::path dir(o.out_dir);
    if (csr_cache_save(cache.p, (dir / "cache.csrs").c_str()) != CSR_OK) {
        return fail("writing cache snapshot", 1);
    }
    CString mem;
    if (csr_cache_memory_report(cache.p, &mem.p) != CSR_OK) return fail("memory report", 1);
    if (!write_text_atomic(dir / "memory_report.json", mem.str() + "\n")) {
        std::cerr << "error: cannot write memory report\n";
        return 1;
    }
    json echo_opts = options;
    echo_opts["input"] = o.input;
    echo_opts["dicts"] = o.dicts;
    if (!write_config_echo(dir / "config.json", "compress", echo_opts)) {
        std::cerr << "error: cannot write config echo\n";
        return 1;
    }
    std::cout << mem.str() << "\nwrote " << (dir / "cache.csrs").string() << "\n";
    return 0;
}

// ---- eval ----

struct EvalOpts {
    std::string input;    // capture, optional when a snapshot is given
    std::string dicts;
    std::string snapshot; // evaluate an existing snapshot instead of sweeping
    std::string out_dir;
    std::vector<int> s_list = {2, 4, 8};
    std::optional<int> sn;
    std::optional<double> outlier_threshold;
    bool attention = true;
};

int run_eval(const EvalOpts& o) {
    StoreHandle store;
    if (csr_dict_store_load(o.dicts.c_str(), &store.p) != CSR_OK) {
        return fail("reading dictionary store " + o.dicts, 1);
    }
    if (!ensure_dir(o.out_dir)) {
        std::cerr << "error: cannot create output directory " << o.out_dir << "\n";
        return 1;
    }
    fs::path dir(o.out_dir);

    if (!o.snapshot.empty()) {
        CacheHandle cache;
        csr_status st = csr_cache_load(o.snapshot.c_str(), store.p, &cache.p);
        if (st != CSR_OK) {
            return fail("loading snapshot", st == CSR_ERR_SCHEMA_MISMATCH ? 6 : 1);
        }
        CaptureHandle cap;
        if (!o.input.empty() && csr_capture_read(o.input.c_str(), &cap.p) != CSR_OK) {
            return fail("reading capture " + o.input, 1);
        }
        CString report;
        st = csr_eval_snapshot(cache.p, cap.p, &report.p);
        if (st != CSR_OK) {
            return fail("evaluating snapshot", st == CSR_ERR_SCHEMA_MISMATCH ? 6 : 1);
        }
        if (!write_text_atomic(dir / "report.json", report.str() + "\n")) {
            std::cerr << "error: cannot write report\n";
            return 1;
        }
        json echo_opts{{"snapshot", o.snapshot}, {"dicts", o.dicts}};
        if (!o.input.empty()) echo_opts["input"] = o.input;
        if (!write_config_echo(dir / "config.json", "eval", echo_opts)) {
            std::cerr << "error: cannot write config echo\n";
            return 1;
        }
        std::cout << report.str() << "\nwrote " << (dir / "report.json").string() << "\n";
        return 0;
    }

    if (o.input.empty()) {
        std::cerr << "error: eval needs --capture or --snapshot\n";
        return 1;
    }
    CaptureHandle cap;
    if (csr_capture_read(o.input.c_str(), &cap.p) != CSR_OK) {
        return fail("reading capture " + o.input, 1);
    }
    CString cap_info_s, store_info_s;
    if (csr_capture_info(cap.p, &cap_info_s.p) != CSR_OK) return fail("capture info", 1);
    if (csr_dict_store_info(store.p, &store_info_s.p) != CSR_OK) return fail("store info", 1);
    json cap_info = json::parse(cap_info_s.str());
    json store_info = json::parse(store_info_s.str());

    json codec{{"s", o.s_list.empty() ? 4 : o.s_list.front()},
               {"s_n", o.sn ? *o.sn : store_info["s_n"].get<int>()},
               {"head_dim", cap_info["head_dim"].get<int>()}};
    codec["outlier_threshold"] =
        o.outlier_threshold ? json(*o.outlier_threshold) : json(nullptr);
    json options{{"codec", codec}, {"s_list", o.s_list}, {"attention", o.attention}};

    CString report, csv;
    csr_status st = csr_eval_sweep(cap.p, store.p, options.dump().c_str(), &report.p, &csv.p);
    if (st != CSR_OK) {
        return fail("running sweep", st == CSR_ERR_SCHEMA_MISMATCH ? 6 : 1);
    }
    if (!write_text_atomic(dir / "sweep_report.json", report.str() + "\n") ||
        !write_text_atomic(dir / "sweep.csv", csv.str())) {
        std::cerr << "error: cannot write sweep outputs\n";
        return 1;
    }
    json echo_opts = options;
    echo_opts["input"] = o.input;
    echo_opts["dicts"] = o.dicts;
    if (!write_config_echo(dir / "config.json", "eval", echo_opts)) {
        std::cerr << "error: cannot write config echo\n";
        return 1;
    }
    std::cout << csv.str() << "wrote " << (dir / "sweep.csv").string() << "\n";
    return 0;
}

// ---- footprint ----

struct FootprintOpts {
    std::string out_dir;
    std::vector<int64_t> lengths = {0, 1024, 2048, 4096};
    int layers = 32, heads = 32, head_dim = 128, batch = 1, s = 8, sn = 1;
    int64_t online_atoms = 0, offline_bytes = 0;
    std::vector<int> quant_bits = {2, 4, 8};
};

int run_footprint(const FootprintOpts& o) {
    json options{{"seq_lengths", o.lengths},
                 {"num_layers", o.layers},
                 {"num_heads", o.heads},
                 {"head_dim", o.head_dim},
                 {"batch", o.batch},
                 {"s", o.s},
                 {"s_n", o.sn},
                 {"online_atoms_per_head", o.online_atoms},
                 {"offline_store_bytes", o.offline_bytes},
                 {"quant_bits", o.quant_bits}};
    CString report, csv;
    if (csr_footprint_curve(options.dump().c_str(), &report.p, &csv.p) != CSR_OK) {
        return fail("computing footprint curve", 1);
    }
    if (!ensure_dir(o.out_dir)) {
        std::cerr << "error: cannot create output directory " << o.out_dir << "\n";
        return 1;
    }
    fs::path dir(o.out_dir);
    if (!write_text_atomic(dir / "footprint.json", report.str() + "\n") ||
        !write_text_atomic(dir / "footprint.csv", csv.str())) {
        std::cerr << "error: cannot write footprint outputs\n";
        return 1;
    }
    if (!write_config_echo(dir / "config.json", "footprint", options)) {
        std::cerr << "error: cannot write config echo\n";
        return 1;
    }
    std::cout << csv.str() << "wrote " << (dir / "footprint.csv").string() << "\n";
    return 0;
}

// ---- ablate ----

struct AblateOpts {
    std::string out_dir;
    uint64_t seed = 0;
};

int run_ablate(const AblateOpts& o) {
    CString report;
    if (csr_ablate(o.seed, &report.p) != CSR_OK) return fail("running ablations", 1);
    if (!ensure_dir(o.out_dir)) {
        std::cerr << "error: cannot create output directory " << o.out_dir << "\n";
        return 1;
    }
    fs::path dir(o.out_dir);
    if (!write_text_atomic(dir / "ablation_report.json", report.str() + "\n")) {
        std::cerr << "error: cannot write ablation report\n";
        return 1;
    }
    if (!write_config_echo(dir / "config.json", "ablate", json{{"seed", o.seed}})) {
        std::cerr << "error: cannot write config echo\n";
        return 1;
    }

    json j = json::parse(report.str());
    for (const json& r : j["results"]) {
        std::cout << (r["passed"].get<bool>() ? "pass " : "FAIL ") << r["name"].get<std::string>()
                  << " " << r["details"].dump() << "\n";
    }
    bool all = j["all_passed"].get<bool>();
    std::cout << (all ? "all ablations passed" : "ablation failures above") << "\n";
    return all ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CSR cache compression toolchain"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<int> threads;
    app.add_option("--threads", threads,
                   "worker threads (default: CSR_THREADS env, then hardware)");

    SynthOpts synth;
    CLI::App* s = app.add_subcommand("synth", "generate a synthetic capture");
    s->add_option("-o,--out", synth.out, "output capture path")->required();
    s->add_option("--config", synth.config, "synthetic spec JSON file");
    s->add_option("--layers", synth.layers, "number of layers");
    s->add_option("--heads", synth.heads, "heads per layer");
    s->add_option("--head-dim", synth.head_dim, "channels per head");
    s->add_option("--tokens", synth.tokens, "tokens per layer");
    s->add_option("--seed", synth.seed, "generator seed");
    s->add_option("--generator", synth.generator, "data generator")
        ->check(CLI::IsMember({"planted_dictionary", "gaussian_mixture", "layer_drift"}));
    s->add_option("--atoms", synth.atoms, "planted dictionary size");
    s->add_option("--sparsity", synth.sparsity, "planted atoms per sample");
    s->add_option("--noise", synth.noise, "planted noise sigma");
    s->add_option("--components", synth.components, "mixture component count");
    s->add_option("--spread", synth.spread, "mixture component spread");
    s->add_option("--drift", synth.drift, "per-layer drift rate in [0, 1]");
    s->add_option("--kind", synth.kind, "cache kind")->check(CLI::IsMember({"key", "value"}));
    s->add_option("--rope", synth.rope, "key capture point")
        ->check(CLI::IsMember({"pre", "post"}));
    s->add_option("--dtype", synth.dtype, "stored dtype")
        ->check(CLI::IsMember({"f32", "f16"}));
    s->add_option("--model", synth.model, "model name tag");

    MergePlanOpts mp;
    CLI::App* m = app.add_subcommand("merge-plan", "group adjacent similar layers");
    m->add_option("-i,--capture", mp.input, "input capture")->required();
    m->add_option("-o,--out", mp.out, "output plan JSON path")->required();
    m->add_option("--delta1", mp.delta1, "per-pair divergence threshold");
    m->add_option("--delta2", mp.delta2, "chain-sum divergence budget");
    m->add_option("--head", mp.head, "head aggregation")
        ->check(CLI::IsMember({"pooled", "mean"}));
    m->add_option("--sample-cap", mp.sample_cap, "max vectors sampled per layer");
    m->add_option("--seed", mp.seed, "sampling seed");

    TrainOpts tr;
    CLI::App* t = app.add_subcommand("train", "train offline dictionaries");
    t->add_option("-i,--capture", tr.input, "input capture")->required();
    t->add_option("--plan", tr.plan, "merge plan JSON file")->required();
    t->add_option("-o,--out", tr.out_dir, "output directory")->required();
    t->add_option("--config", tr.config, "options JSON file");
    t->add_option("--atoms", tr.atoms, "atoms per dictionary");
    t->add_option("--s", tr.s, "training sparsity");
    t->add_option("--sn", tr.sn, "channel chunks per head");
    t->add_option("--epochs", tr.epochs, "training epochs");
    t->add_option("--batch", tr.batch, "batch size");
    t->add_option("--lr", tr.lr, "learning rate");
    t->add_option("--beta-cap", tr.beta_cap, "diversity weight cap");
    t->add_option("--beta-scale", tr.beta_scale, "diversity weight scale");
    t->add_option("--seed", tr.seed, "training seed");
    t->add_option("--kmeans-iters", tr.kmeans_iters, "k-means iterations");
    t->add_option("--per-head-atoms", tr.per_head_atoms, "atoms per head (default: --atoms)");
    t->add_option("--val-fraction", tr.val_fraction, "held-out fraction per group");
    t->add_flag("--head-shared", tr.head_shared, "train one dictionary shared by all heads");

    CompressOpts co;
    CLI::App* c = app.add_subcommand("compress", "compress a capture into a cache snapshot");
    c->add_option("-i,--capture", co.input, "input capture")->required();
    c->add_option("--dicts", co.dicts, "trained dictionary store")->required();
    c->add_option("-o,--out", co.out_dir, "output directory")->required();
    c->add_option("--s", co.s, "atoms kept per chunk");
    c->add_option("--sn", co.sn, "channel chunks (default: from the store)");
    c->add_option("--outlier-threshold", co.outlier_threshold,
                  "relative residual above which the raw vector is kept");
    c->add_option("--online-size", co.online_size, "online atoms per (layer, head)");
    c->add_option("--seed", co.seed, "online sampling seed");

    EvalOpts ev;
    CLI::App* e = app.add_subcommand("eval", "measure reconstruction and attention fidelity");
    e->add_option("-i,--capture", ev.input, "input capture");
    e->add_option("--dicts", ev.dicts, "trained dictionary store")->required();
    e->add_option("--snapshot", ev.snapshot, "evaluate this cache snapshot");
    e->add_option("-o,--out", ev.out_dir, "output directory")->required();
    e->add_option("--sweep-s", ev.s_list, "sparsity levels to sweep")->delimiter(',');
    e->add_option("--sn", ev.sn, "channel chunks (default: from the store)");
    e->add_option("--outlier-threshold", ev.outlier_threshold,
                  "relative residual above which the raw vector is kept");
    e->add_flag("--attention,!--no-attention", ev.attention, "include the attention proxy");

    FootprintOpts fp;
    CLI::App* f = app.add_subcommand("footprint", "analytic memory curves");
    f->add_option("-o,--out", fp.out_dir, "output directory")->required();
    f->add_option("--lengths", fp.lengths, "sequence lengths")->delimiter(',');
    f->add_option("--layers", fp.layers, "number of layers");
    f->add_option("--heads", fp.heads, "heads per layer");
    f->add_option("--head-dim", fp.head_dim, "channels per head");
    f->add_option("--batch", fp.batch, "batch size");
    f->add_option("--s", fp.s, "atoms kept per chunk");
    f->add_option("--sn", fp.sn, "channel chunks per head");
    f->add_option("--online-atoms", fp.online_atoms, "online atoms per head");
    f->add_option("--offline-bytes", fp.offline_bytes, "amortized offline store bytes");
    f->add_option("--quant-bits", fp.quant_bits, "hypothetical quantizer bit widths")
        ->delimiter(',');

    AblateOpts ab;
    CLI::App* a = app.add_subcommand("ablate", "run the four directional ablations");
    a->add_option("-o,--out", ab.out_dir, "output directory")->required();
    a->add_option("--seed", ab.seed, "experiment seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    apply_threads(threads);

    if (app.got_subcommand(s)) return run_synth(synth);
    if (app.got_subcommand(m)) return run_merge_plan(mp);
    if (app.got_subcommand(t)) return run_train(tr);
    if (app.got_subcommand(c)) return run_compress(co);
    if (app.got_subcommand(e)) return run_eval(ev);
    if (app.got_subcommand(f)) return run_footprint(fp);
    if (app.got_subcommand(a)) return run_ablate(ab);
    return 1;
}
