#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "streamprobe/calibration.hpp"
#include "streamprobe/cascade.hpp"
#include "streamprobe/dataset_io.hpp"
#include "streamprobe/errors.hpp"
#include "streamprobe/kv_config.hpp"
#include "streamprobe/metrics.hpp"
#include "streamprobe/parallel.hpp"
#include "streamprobe/streaming.hpp"
#include "streamprobe/synth.hpp"
#include "streamprobe/tradeoff.hpp"
#include "streamprobe/trainer.hpp"

namespace streamprobe::cli {
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr const char* kManifest = "manifest.txt";
constexpr double kDefaultRate = 0.01;

struct Context {
    const RunOptions& opts;
    KeyValueConfig kv;
    unsigned long long seed = 0;
    std::ostream& out;
    std::ostream& err;
    std::vector<std::pair<std::string, fs::path>> inputs;

    void log(int level, const std::string& msg) const {
        if (opts.verbosity >= level) err << msg << '\n';
    }
};

void add_common(CLI::App* sub, RunOptions& o) {
    sub->add_option("-c,--config", o.config_path, "Strict key = value config file")->check(CLI::ExistingFile);
    sub->add_option("-o,--out", o.out_dir, "Output directory for artifacts and the run manifest")->required();
    sub->add_option("--seed", o.seed, "Root seed; overrides the 'seed' config key");
    sub->add_option("--set", o.overrides, "Config override key=value; overrides the config file (repeatable)");
    sub->add_flag("-v,--verbose", o.verbosity, "Progress messages on stderr (repeat for more)");
}

void add_data(CLI::App* sub, RunOptions& o) {
    sub->add_option("--data", o.data, "Activation dataset")->required()->check(CLI::ExistingFile);
}

void add_probe(CLI::App* sub, RunOptions& o) {
    sub->add_option("--probe", o.probe, "Probe checkpoint")->required()->check(CLI::ExistingFile);
}

void add_stage2(CLI::App* sub, RunOptions& o) {
    sub->add_option("--stage2-probe", o.stage2_probe,
                    "Probe checkpoint used as the second stage; the stub scorer (stub.* keys) otherwise")
        ->check(CLI::ExistingFile);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text) || !f.flush()) throw DataError("cannot write " + path.string());
}

std::string file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a_hex(buf.str());
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

void reject_seed_keys(const KeyValueConfig& kv) {
    for (const char* key : {"synth.seed", "train.seed", "stub.seed"})
        if (kv.contains(key))
            throw ConfigError(std::string("config key '") + key +
                              "' is not settable; every seed derives from 'seed' or --seed");
}

Context make_context(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    Context ctx{opts, {}, 0, out, err, {}};
    if (!opts.config_path.empty()) ctx.kv = KeyValueConfig::load(opts.config_path);
    for (const auto& ov : opts.overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + ov + "'");
        ctx.kv.set(ov.substr(0, eq), ov.substr(eq + 1));
    }
    if (opts.seed) ctx.kv.set("seed", std::to_string(*opts.seed));
    reject_seed_keys(ctx.kv);
    ctx.seed = ctx.kv.get_uint("seed", 0);
    std::error_code ec;
    fs::create_directories(opts.out_dir, ec);
    if (ec || !fs::is_directory(opts.out_dir))
        throw ConfigError("output directory " + opts.out_dir.string() + " is not writable");
    return ctx;
}

void write_manifest(const Context& ctx) {
    std::ostringstream m;
    m << "subcommand = " << ctx.opts.subcommand << '\n'
      << "version = " << STREAMPROBE_VERSION << '\n'
      << "seed = " << ctx.seed << '\n'
      << "config_hash = " << fnv1a_hex(ctx.kv.canonical()) << '\n';
    for (const auto& [name, path] : ctx.inputs)
        m << "input." << name << " = " << path.string() << '\n'
          << "input." << name << ".hash = " << file_hash(path) << '\n';
    for (const auto& [key, value] : ctx.kv.entries()) m << "config." << key << " = " << value << '\n';
    write_text(ctx.opts.out_dir / kManifest, m.str());
}

std::vector<LabeledExchange> load_data(Context& ctx, const std::string& name, const fs::path& path) {
    ctx.inputs.emplace_back(name, path);
    auto xs = read_dataset(path);
    ctx.log(1, "read " + std::to_string(xs.size()) + " exchanges from " + path.string());
    return xs;
}

ProbeParameters load_probe_input(Context& ctx, const std::string& name, const fs::path& path) {
    ctx.inputs.emplace_back(name, path);
    return load_probe(path);
}

StreamConfig load_stream_config(const KeyValueConfig& kv, const ProbeParameters& probe) {
    StreamConfig c = stream_config_for(probe);
    if (auto s = kv.get("stream.smoothing")) {
        auto parsed = parse_smoothing(*s);
        if (!parsed) throw ConfigError("config key 'stream.smoothing': expected ema or sliding_window, got '" + *s + "'");
        c.smoothing = *parsed;
    }
    c.window_size = kv.get_uint("stream.window_size", c.window_size);
    if (kv.contains("stream.ema_decay")) c.ema_decay = kv.get_double("stream.ema_decay", 0.0);
    c.batch_size = kv.get_uint("stream.batch_size", c.batch_size);
    c.threshold = kv.get_double("stream.threshold", c.threshold);
    c.check_prompt_boundary = kv.get_bool("stream.check_prompt_boundary", c.check_prompt_boundary);
    c.validate();
    return c;
}

double load_rate(const KeyValueConfig& kv, const std::string& key) {
    const double q = kv.get_double(key, kDefaultRate);
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("config key '" + key + "' must lie in (0, 1)");
    return q;
}

CostModel load_cost(const KeyValueConfig& kv) {
    CostModel c;
    c.probe_layers = kv.get_double("cost.probe_layers", c.probe_layers);
    c.hidden_dim = kv.get_double("cost.hidden_dim", c.hidden_dim);
    c.stage2_params = kv.get_double("cost.stage2_params", c.stage2_params);
    c.tokens_per_exchange = kv.get_double("cost.tokens_per_exchange", c.tokens_per_exchange);
    c.validate();
    return c;
}

std::vector<double> max_scores(const ProbeParameters& probe, const StreamConfig& cfg,
                               std::span<const LabeledExchange> xs) {
    std::vector<double> s(xs.size());
    parallel_for(xs.size(), [&](std::size_t i) { s[i] = max_decision_logit(probe, xs[i].sequence, cfg); });
    return s;
}

// Second stage from --stage2-probe or the stub scorer. A stub with a nonzero
// correlation is tied to the first-stage probe through `reference`.
std::unique_ptr<SecondStageScorer> make_stage2(Context& ctx, const ProbeParameters& probe,
                                               const StreamConfig& stream_cfg,
                                               std::span<const LabeledExchange> reference) {
    if (!ctx.opts.stage2_probe.empty()) {
        auto p2 = load_probe_input(ctx, "stage2_probe", ctx.opts.stage2_probe);
        return std::make_unique<ProbeStageScorer>(p2, stream_config_for(p2));
    }
    StubScorerSpec spec = load_stub_spec(ctx.kv);
    spec.seed = ctx.seed;
    auto stub = std::make_unique<StubScorer>(spec, probe.feature_dim());
    if (spec.correlation_with_probe != 0.0) stub->fit_reference(probe, stream_cfg, reference);
    return stub;
}

void cmd_gen(Context& ctx) {
    SynthSpec spec = load_synth_spec(ctx.kv);
    spec.seed = ctx.seed;
    ctx.kv.require_all_consumed();
    const auto data = generate_dataset(spec);
    const auto path = ctx.opts.out_dir / "dataset.spds";
    write_synth_dataset(path, spec, data);
    write_manifest(ctx);
    ctx.out << "wrote " << data.exchanges.size() << " exchanges (" << spec.n_benign << " benign, " << spec.n_attack
            << " attack) to " << path.string() << '\n';
}

void cmd_train(Context& ctx) {
    TrainingConfig cfg;
    if (auto v = ctx.kv.get("train.loss_variant")) {
        auto parsed = parse_loss_variant(*v);
        if (!parsed) throw ConfigError("config key 'train.loss_variant': unknown variant '" + *v + "'");
        cfg.loss_variant = *parsed;
    }
    cfg.window_size = ctx.kv.get_uint("train.window_size", cfg.window_size);
    cfg.temperature = ctx.kv.get_double("train.temperature", cfg.temperature);
    cfg.learning_rate = ctx.kv.get_double("train.learning_rate", cfg.learning_rate);
    cfg.batch_size = ctx.kv.get_uint("train.batch_size", cfg.batch_size);
    cfg.epochs = ctx.kv.get_uint("train.epochs", cfg.epochs);
    cfg.anneal_steps = ctx.kv.get_uint("train.anneal_steps", cfg.anneal_steps);
    cfg.differentiate_weights = ctx.kv.get_bool("train.differentiate_weights", cfg.differentiate_weights);
    cfg.seed = ctx.seed;
    ctx.kv.require_all_consumed();
    cfg.validate();

    const auto xs = load_data(ctx, "data", ctx.opts.data);
    const auto result = train_probe(xs, cfg);
    save_probe(ctx.opts.out_dir / "probe.bin", result.probe);
    write_training_log(ctx.opts.out_dir / "training_log.tsv", result.log);
    write_manifest(ctx);
    ctx.out << "trained " << to_string(cfg.loss_variant) << " probe, final mean loss "
            << fmt(result.log.empty() ? NAN : result.log.back().mean_loss) << '\n';
}

void cmd_score(Context& ctx) {
    const auto probe = load_probe_input(ctx, "probe", ctx.opts.probe);
    const auto cfg = load_stream_config(ctx.kv, probe);
    ctx.kv.require_all_consumed();
    const auto xs = load_data(ctx, "data", ctx.opts.data);
    std::vector<std::string> chunks(xs.size());
    std::vector<std::uint8_t> flagged(xs.size());
    parallel_for(xs.size(), [&](std::size_t i) {
        const auto trace = score_exchange(probe, xs[i].sequence, cfg);
        flagged[i] = trace.flagged_at.has_value();
        std::ostringstream s;
        write_trace(s, xs[i].id, trace);
        chunks[i] = s.str();
    });
    std::ofstream f(ctx.opts.out_dir / "traces.tsv", std::ios::binary | std::ios::trunc);
    f << "#id\tt\traw\tsmoothed\tcummax_prob\tflagged\n";
    for (const auto& c : chunks) f << c;
    if (!f.flush()) throw DataError("cannot write traces");
    write_manifest(ctx);
    std::size_t n_flagged = 0;
    for (auto v : flagged) n_flagged += v;
    ctx.out << "scored " << xs.size() << " exchanges, " << n_flagged << " flagged at threshold "
            << fmt(cfg.threshold) << '\n';
}

std::vector<double> benign_scores(const ProbeParameters& probe, const StreamConfig& cfg,
                                  std::span<const LabeledExchange> xs) {
    std::vector<LabeledExchange> benign;
    for (const auto& ex : xs)
        if (!ex.is_positive()) benign.push_back(ex);
    if (benign.empty()) throw DataError("calibration needs benign exchanges");
    return max_scores(probe, cfg, benign);
}

void cmd_calibrate(Context& ctx) {
    const auto probe = load_probe_input(ctx, "probe", ctx.opts.probe);
    const auto cfg = load_stream_config(ctx.kv, probe);
    const double q = load_rate(ctx.kv, "calibrate.rate");
    ctx.kv.require_all_consumed();
    const auto xs = load_data(ctx, "data", ctx.opts.data);
    const auto r = calibrate_threshold(benign_scores(probe, cfg, xs), q);
    if (!r.warning.empty()) ctx.err << "warning: " << r.warning << '\n';
    std::ostringstream s;
    s << "threshold = " << fmt(r.threshold) << '\n'
      << "target_rate = " << fmt(r.target_rate) << '\n'
      << "realized_rate = " << fmt(r.realized_rate) << '\n'
      << "n_benign = " << r.n_benign << '\n'
      << "n_exceeding = " << r.n_exceeding << '\n'
      << "order_statistic_index = " << r.order_statistic_index << '\n'
      << "insufficient_sample = " << (r.insufficient_sample ? "true" : "false") << '\n';
    write_text(ctx.opts.out_dir / "calibration.txt", s.str());
    write_manifest(ctx);
    ctx.out << s.str();
}

void cmd_cascade(Context& ctx) {
    const auto probe = load_probe_input(ctx, "probe", ctx.opts.probe);
    const auto stream_cfg = load_stream_config(ctx.kv, probe);
    const auto cfg = load_cascade_config(ctx.kv);
    const auto xs = load_data(ctx, "data", ctx.opts.data);
    const auto stage2 = make_stage2(ctx, probe, stream_cfg, xs);
    ctx.kv.require_all_consumed();

    std::vector<CascadeDecision> decisions(xs.size());
    parallel_for(xs.size(),
                 [&](std::size_t i) { decisions[i] = cascade_decide(probe, stream_cfg, *stage2, cfg, xs[i]); });
    std::ostringstream table;
    table << "#id\tescalated\tstage1_max\tstage2\tfinal\tblocked\n";
    std::vector<Outcome> outcomes;
    std::vector<std::uint8_t> escalated;
    bool any_attack = false, any_benign = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        write_decision(table, xs[i].id, decisions[i]);
        outcomes.push_back({decisions[i].blocked, xs[i].is_positive()});
        escalated.push_back(decisions[i].escalated ? 1 : 0);
        (xs[i].is_positive() ? any_attack : any_benign) = true;
    }
    write_text(ctx.opts.out_dir / "decisions.tsv", table.str());

    const auto cost = accounted_cost(cfg.cost, escalated);
    std::size_t n_esc = 0;
    for (auto e : escalated) n_esc += e;
    std::ostringstream s;
    s << "stage2 = " << stage2->name() << '\n'
      << "n_exchanges = " << xs.size() << '\n'
      << "escalation_fraction = " << fmt(static_cast<double>(n_esc) / static_cast<double>(xs.size())) << '\n'
      << "relative_cost = " << fmt(cost.relative) << '\n'
      << "attack_success_rate = " << (any_attack ? fmt(attack_success_rate(outcomes)) : "NA") << '\n'
      << "benign_flag_rate = " << (any_benign ? fmt(benign_flag_rate(outcomes)) : "NA") << '\n';
    write_text(ctx.opts.out_dir / "cascade_summary.txt", s.str());
    write_manifest(ctx);
    ctx.out << s.str();
}

void cmd_sweep(Context& ctx) {
    const auto probe = load_probe_input(ctx, "probe", ctx.opts.probe);
    const auto stream_cfg = load_stream_config(ctx.kv, probe);
    const double alpha = ctx.kv.get_double("alpha", kDefaultEnsembleAlpha);
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("config key 'alpha' must lie in [0, 1]");
    const auto cost = load_cost(ctx.kv);
    const double q = load_rate(ctx.kv, "sweep.rate");
    const double lo = ctx.kv.get_double("sweep.min", -5.0);
    const double hi = ctx.kv.get_double("sweep.max", 5.0);
    const auto steps = ctx.kv.get_uint("sweep.steps", 21);
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo <= hi) || steps < 1)
        throw ConfigError("sweep range needs finite sweep.min <= sweep.max and sweep.steps >= 1");
    const auto xs = load_data(ctx, "data", ctx.opts.data);
    const auto stage2 = make_stage2(ctx, probe, stream_cfg, xs);
    ctx.kv.require_all_consumed();

    std::vector<double> thresholds;
    for (unsigned long long k = 0; k < steps; ++k)
        thresholds.push_back(steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(steps - 1));
    const auto scores = collect_scores(xs, probe, stream_cfg, *stage2);
    const auto points = sweep_tradeoff(scores, alpha, q, thresholds, cost);
    std::ostringstream s;
    write_tradeoff(s, points);
    write_text(ctx.opts.out_dir / "tradeoff.tsv", s.str());
    write_manifest(ctx);
    for (const auto& p : points)
        if (!p.valid) ctx.err << "warning: sweep point " << fmt(p.stage1_threshold) << " invalid: " << p.error << '\n';
    ctx.out << s.str();
}

void cmd_eval(Context& ctx) {
    const auto probe = load_probe_input(ctx, "probe", ctx.opts.probe);
    const auto cfg = load_stream_config(ctx.kv, probe);
    const double q = load_rate(ctx.kv, "eval.rate");
    ctx.kv.require_all_consumed();
    const auto test = load_data(ctx, "data", ctx.opts.data);
    const bool separate = !ctx.opts.calibration_data.empty();
    const auto cal = separate ? load_data(ctx, "calibration_data", ctx.opts.calibration_data) : test;

    const auto cal_scores = benign_scores(probe, cfg, cal);
    const auto test_scores = max_scores(probe, cfg, test);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < test.size(); ++i) (test[i].is_positive() ? pos : neg).push_back(test_scores[i]);
    if (pos.empty()) throw DataError("evaluation set has no attack exchanges");
    const auto op = evaluate_at_flag_rate(cal_scores, pos, q);
    std::size_t neg_flagged = 0;
    for (double v : neg) neg_flagged += v > op.threshold;

    std::ostringstream s;
    s << "probe_variant = " << to_string(probe.loss_variant) << '\n'
      << "probe_window = " << probe.window_size << '\n'
      << "smoothing = " << to_string(cfg.smoothing) << '\n'
      << "stream_window = " << cfg.window_size << '\n'
      << "calibration = " << (separate ? "separate" : "test_benign") << '\n'
      << "target_rate = " << fmt(q) << '\n'
      << "n_calibration_benign = " << cal_scores.size() << '\n'
      << "n_test_attack = " << pos.size() << '\n'
      << "n_test_benign = " << neg.size() << '\n'
      << "threshold = " << fmt(op.threshold) << '\n'
      << "calibration_flag_rate = " << fmt(op.benign_flag_rate) << '\n'
      << "attack_success_rate = " << fmt(op.attack_success_rate) << '\n'
      << "attacks_unblocked = " << op.attacks_unblocked << '\n'
      << "benign_flag_rate = "
      << (neg.empty() ? std::string("NA") : fmt(static_cast<double>(neg_flagged) / static_cast<double>(neg.size())))
      << '\n'
      << "roc_auc = " << (neg.empty() ? std::string("NA") : fmt(roc_auc(pos, neg))) << '\n';
    write_text(ctx.opts.out_dir / "metrics.txt", s.str());
    write_manifest(ctx);
    ctx.out << s.str();
}

// Key-value artifacts are echoed as they are; the rest are summarized.
void report_dir(std::ostream& s, const fs::path& dir) {
    const auto mpath = dir / kManifest;
    if (!fs::exists(mpath)) throw DataError("no run manifest in " + dir.string());
    const auto manifest = KeyValueConfig::load(mpath);
    const auto sub = manifest.get_string("subcommand", "?");
    s << "== " << dir.string() << " (" << sub << ", seed " << manifest.get_string("seed", "?") << ", config "
      << manifest.get_string("config_hash", "?") << ")\n";
    for (const char* name : {"calibration.txt", "cascade_summary.txt", "metrics.txt"}) {
        const auto p = dir / name;
        if (!fs::exists(p)) continue;
        const auto kv = KeyValueConfig::load(p);
        for (const auto& [k, v] : kv.entries()) s << "  " << k << ": " << v << '\n';
    }
    if (fs::exists(dir / "dataset.spds")) {
        const auto meta = read_synth_metadata(metadata_path_for(dir / "dataset.spds"));
        std::size_t attacks = 0;
        for (const auto& m : meta) attacks += m.attack;
        s << "  exchanges: " << meta.size() << " (" << meta.size() - attacks << " benign, " << attacks
          << " attack)\n";
    }
    if (fs::exists(dir / "probe.bin")) {
        const auto p = load_probe(dir / "probe.bin");
        s << "  probe: " << to_string(p.loss_variant) << ", window " << p.window_size << ", " << p.feature_dim()
          << " features\n";
    }
    if (fs::exists(dir / "training_log.tsv")) {
        std::ifstream in(dir / "training_log.tsv");
        std::string line, last;
        while (std::getline(in, line))
            if (!line.empty()) last = line;
        std::istringstream fields(last);
        std::string epoch, loss;
        fields >> epoch >> loss;
        if (!loss.empty()) s << "  final epoch " << epoch << " mean loss: " << loss << '\n';
    }
    if (fs::exists(dir / "tradeoff.tsv")) {
        std::ifstream in(dir / "tradeoff.tsv");
        std::string line;
        s << "  stage1_threshold  escalation  relative_cost  attack_success\n";
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream f(line);
            std::string t, esc, cost, asr;
            f >> t >> esc >> cost >> asr;
            s << "  " << t << "  " << esc << "  " << cost << "  " << asr << '\n';
        }
    }
    if (fs::exists(dir / "traces.tsv")) {
        std::ifstream in(dir / "traces.tsv");
        std::string line, prev_id;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto id = line.substr(0, line.find('\t'));
            if (id != prev_id) ++n;
            prev_id = id;
        }
        s << "  traced exchanges: " << n << '\n';
    }
}

void cmd_report(Context& ctx) {
    ctx.kv.require_all_consumed();
    std::ostringstream s;
    for (const auto& dir : ctx.opts.from) report_dir(s, dir);
    write_text(ctx.opts.out_dir / "report.txt", s.str());
    write_manifest(ctx);
    ctx.out << s.str();
}

}  // namespace

std::unique_ptr<CLI::App> build_app(RunOptions& o) {
    auto app = std::make_unique<CLI::App>("Streaming linear-probe classifiers over model activations");
    app->require_subcommand(1);
    app->set_version_flag("--version", std::string(STREAMPROBE_VERSION));

    auto* gen = app->add_subcommand("gen", "Generate a synthetic activation dataset (synth.* keys)");
    add_common(gen, o);

    auto* train = app->add_subcommand("train", "Train a probe (train.* keys)");
    add_common(train, o);
    add_data(train, o);

    auto* score = app->add_subcommand("score", "Stream a probe over a dataset and export per-token traces");
    add_common(score, o);
    add_probe(score, o);
    add_data(score, o);

    auto* calibrate = app->add_subcommand("calibrate", "Calibrate a flag threshold on benign exchanges");
    add_common(calibrate, o);
    add_probe(calibrate, o);
    add_data(calibrate, o);

    auto* cascade = app->add_subcommand("cascade", "Run the two-stage classifier and export decisions");
    add_common(cascade, o);
    add_probe(cascade, o);
    add_data(cascade, o);
    add_stage2(cascade, o);

    auto* sweep = app->add_subcommand("sweep", "Sweep the stage-1 threshold and export cost/robustness points");
    add_common(sweep, o);
    add_probe(sweep, o);
    add_data(sweep, o);
    add_stage2(sweep, o);

    auto* eval = app->add_subcommand("eval", "Attack success rate at a calibrated benign flag rate");
    add_common(eval, o);
    add_probe(eval, o);
    add_data(eval, o);
    eval->add_option("--calibration-data", o.calibration_data,
                     "Benign calibration dataset; the benign part of --data otherwise")
        ->check(CLI::ExistingFile);

    auto* report = app->add_subcommand("report", "Summarize the artifacts of earlier runs");
    add_common(report, o);
    report->add_option("--from", o.from, "Output directory of an earlier run (repeatable)")
        ->required()
        ->check(CLI::ExistingDirectory);

    for (auto* sub : app->get_subcommands({})) {
        sub->callback([&o, sub] { o.subcommand = sub->get_name(); });
    }
    return app;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunOptions opts;
    auto app = build_app(opts);
    try {
        app->parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app->help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app->help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << STREAMPROBE_VERSION << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    }

    try {
        auto ctx = make_context(opts, out, err);
        const auto& sub = opts.subcommand;
        if (sub == "gen") cmd_gen(ctx);
        else if (sub == "train") cmd_train(ctx);
        else if (sub == "score") cmd_score(ctx);
        else if (sub == "calibrate") cmd_calibrate(ctx);
        else if (sub == "cascade") cmd_cascade(ctx);
        else if (sub == "sweep") cmd_sweep(ctx);
        else if (sub == "eval") cmd_eval(ctx);
        else if (sub == "report") cmd_report(ctx);
        else throw UsageError("unknown subcommand '" + sub + "'");
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 4;
    } catch (const CascadeError& e) {
        err << "data error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return 5;
    }
    return 0;
}

}  // namespace streamprobe::cli
