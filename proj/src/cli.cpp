#include "streamgda/cli.hpp"

#include "streamgda/errors.hpp"
#include "streamgda/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>

namespace streamgda {

namespace {

struct EngineFlags {
    AdaptConfig config;
    bool no_adapt = false;
    bool no_normalize = false;
    std::uint64_t seed = 0;

    AdaptConfig resolved() const {
        AdaptConfig c = config;
        c.adaptation_enabled = !no_adapt;
        c.normalize_features = !no_normalize;
        return c;
    }
};

void add_engine_flags(CLI::App& cmd, EngineFlags& f) {
    cmd.add_option("--alpha", f.config.alpha, "Fusion weight of the generative logits")->capture_default_str();
    cmd.add_option("--beta", f.config.beta, "Sharpness of the entropy weight exp(-beta*H)")->capture_default_str();
    cmd.add_option("--temp", f.config.zero_shot_temperature, "Zero-shot softmax temperature")->capture_default_str();
    cmd.add_option("--eps", f.config.regularization_epsilon, "Relative covariance ridge")->capture_default_str();
    cmd.add_option("--refactor-interval", f.config.refactor_interval, "Updates between refactorizations")
        ->capture_default_str();
    cmd.add_option("--cov-prior", f.config.covariance_prior_weight, "Sample mass of the identity covariance prior")
        ->capture_default_str();
    cmd.add_flag("--no-adapt", f.no_adapt, "Predict only, never update the state");
    cmd.add_flag("--no-normalize", f.no_normalize, "Use features and text embeddings as stored");
    cmd.add_option("--seed", f.seed, "Seed (accepted for reproducible invocations)");
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open input '" + path + "'");
    return in;
}

RecordSource reader_source(EmbeddingReader& reader) {
    return [&reader]() { return reader.next(); };
}

int cmd_run(const std::string& input, const EngineFlags& flags, const std::string& csv_path,
            const std::string& checkpoint_path, std::ostream& out, std::ostream& err) {
    std::ifstream in = open_input(input);
    EmbeddingReader reader(in);
    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path, std::ios::binary);
        if (!csv) throw FormatError("cannot open csv log '" + csv_path + "'");
    }
    const RunResult result = run_stream(reader.text(), reader_source(reader), flags.resolved(), csv_path.empty() ? nullptr : &csv);
    out << format_report(result.report);
    err << "wall_time_s=" << result.report.wall_time.count() << '\n';
    if (!checkpoint_path.empty()) {
        std::ofstream ckpt(checkpoint_path, std::ios::binary);
        if (!ckpt) throw FormatError("cannot open checkpoint '" + checkpoint_path + "'");
        checkpoint_state(ckpt, result.final_state);
    }
    return kExitOk;
}

int cmd_ablate(const std::string& input, const EngineFlags& flags, std::ostream& out) {
    std::ifstream probe = open_input(input);
    const ClassTextEmbeddings text = EmbeddingReader(probe).text();

    // Each row replays the file from the start with its own reader.
    std::ifstream in;
    std::unique_ptr<EmbeddingReader> reader;
    auto open_source = [&]() -> RecordSource {
        in = open_input(input);
        reader = std::make_unique<EmbeddingReader>(in);
        return [r = reader.get()]() { return r->next(); };
    };
    out << format_ablation(run_ablation(text, open_source, flags.resolved()));
    return kExitOk;
}

int cmd_oracle(const std::string& input, const EngineFlags& flags, std::ostream& out) {
    std::ifstream in = open_input(input);
    EmbeddingReader reader(in);
    std::vector<EmbeddingRecord> records;
    while (auto rec = reader.next()) records.push_back(std::move(*rec));
    const OracleReport report = run_oracle(reader.text(), records, flags.resolved());
    out << format_oracle(report);
    return kExitOk;
}

struct SynthFlags {
    Index classes = 8;
    Index dim = 64;
    std::uint64_t samples = 5000;
    double separation = 1.0;
    double noise_variance = 0.3;
    double text_noise = 0.5;
    std::uint64_t seed = 0;
    std::string output;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
    const SyntheticSpec spec =
        make_shift_scenario(f.classes, f.dim, f.separation, f.noise_variance, f.text_noise, f.samples, f.seed);
    const SyntheticData data = generate_synthetic(spec);
    EmbeddingFileHeader header;
    header.dim = static_cast<std::uint32_t>(f.dim);
    header.num_classes = static_cast<std::uint32_t>(f.classes);
    header.record_count = data.records.size();
    header.flags = kFlagLabels;
    std::ofstream file(f.output, std::ios::binary);
    if (!file) throw FormatError("cannot open output '" + f.output + "'");
    write_embedding_file(file, header, data.text, data.records);
    out << "wrote=" << f.output << '\n' << "records=" << data.records.size() << '\n';
    return kExitOk;
}

int cmd_ckpt(const std::string& path, std::ostream& out) {
    std::ifstream in = open_input(path);
    const MixtureState state = restore_state(in);
    // A checkpoint is only usable if its covariance still factorizes.
    MixtureState check = state;
    check.refactor();
    out << "d=" << state.dim() << '\n'
        << "K=" << state.num_classes() << '\n'
        << "weighted_total=" << state.weighted_total << '\n'
        << "updates_since_refactor=" << state.updates_since_refactor << '\n'
        << "factor=" << (state.factor ? "present" : "absent") << '\n'
        << "ridge=" << check.factor->ridge() << '\n';
    for (Index y = 0; y < state.num_classes(); ++y) out << "prior[" << y << "]=" << state.priors[y] << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Streaming test-time adaptation with an online shared-covariance Gaussian mixture", "streamgda"};
    app.require_subcommand(1);

    EngineFlags run_flags;
    std::string run_input;
    std::string csv_path;
    std::string checkpoint_path;
    CLI::App* run = app.add_subcommand("run", "Predict-then-adapt over an EMBSTRM1 stream");
    run->add_option("input", run_input, "EMBSTRM1 file")->required();
    add_engine_flags(*run, run_flags);
    run->add_option("--csv-log", csv_path, "Per-sample CSV log");
    run->add_option("--checkpoint", checkpoint_path, "Write the final state to this GDACKPT1 file");

    EngineFlags ablate_flags;
    std::string ablate_input;
    CLI::App* ablate = app.add_subcommand("ablate", "Accuracy of the method with each mechanism removed");
    ablate->add_option("input", ablate_input, "EMBSTRM1 file")->required();
    add_engine_flags(*ablate, ablate_flags);

    EngineFlags oracle_flags;
    std::string oracle_input;
    CLI::App* oracle = app.add_subcommand("oracle", "Compare the online result with batch EM on the same data");
    oracle->add_option("input", oracle_input, "EMBSTRM1 file")->required();
    add_engine_flags(*oracle, oracle_flags);

    SynthFlags synth_flags;
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic shifted-mixture stream");
    synth->add_option("--classes", synth_flags.classes)->capture_default_str()->check(CLI::Range(2, 1 << 20));
    synth->add_option("--dim", synth_flags.dim)->capture_default_str()->check(CLI::Range(1, 1 << 20));
    synth->add_option("--samples", synth_flags.samples)->capture_default_str();
    synth->add_option("--separation", synth_flags.separation, "Norm of each true class mean")->capture_default_str();
    synth->add_option("--noise-var", synth_flags.noise_variance, "Isotropic within-class variance")
        ->capture_default_str();
    synth->add_option("--text-noise", synth_flags.text_noise, "Norm scale of the text-embedding displacement")
        ->capture_default_str();
    synth->add_option("--seed", synth_flags.seed)->capture_default_str();
    synth->add_option("-o,--output", synth_flags.output, "Output EMBSTRM1 file")->required();

    std::string ckpt_path;
    CLI::App* ckpt = app.add_subcommand("ckpt", "Summarize a GDACKPT1 checkpoint");
    ckpt->add_option("path", ckpt_path, "Checkpoint file")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitInput;
    }

    try {
        if (*run) return cmd_run(run_input, run_flags, csv_path, checkpoint_path, out, err);
        if (*ablate) return cmd_ablate(ablate_input, ablate_flags, out);
        if (*oracle) return cmd_oracle(oracle_input, oracle_flags, out);
        if (*synth) return cmd_synth(synth_flags, out);
        if (*ckpt) return cmd_ckpt(ckpt_path, out);
    } catch (const NumericalBreakdown& e) {
        err << "numerical breakdown: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const TruncatedError& e) {
        err << "truncated input: " << e.what() << '\n';
        return kExitInput;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << '\n';
        return kExitInput;
    } catch (const InvalidInput& e) {
        err << "invalid input: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}

}  // namespace streamgda
