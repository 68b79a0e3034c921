// cvlink command-line front end: simulation, ingestion, certification,
// sweeps, and rate aggregation for the fading-channel CV link pipeline.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cvlink/certify.hpp"
#include "cvlink/channel.hpp"
#include "cvlink/detection.hpp"
#include "cvlink/rates.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cvlink;

namespace {

constexpr const char* kVersion = "0.1.0";

// validation errors are reported with the config location that caused them
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BeamSpec {
    double beam_radius = 1.0;
    double aperture_radius = 1.01;
    double jitter_sigma = 0.325;
};

struct RunConfig {
    // alphabet
    std::string kind = "four_state";
    double amplitude = 1.0;
    std::vector<fock::Complex> amplitudes;  // calibrated only
    std::vector<double> priors;             // calibrated only
    // channel
    channel::ChannelParams channel_params;
    std::optional<double> fixed_t;
    std::optional<std::string> transmission_file;
    std::optional<BeamSpec> beam;
    int n_transmission_samples = 100000;
    // detection
    std::int64_t n_slots = 100000;
    std::uint64_t seed = 1;
    double bin_width = 0.009;
    std::int64_t min_count = 750;
    double raw_scale = 1.0;
    bool lo_scales_with_t = true;
    // certify
    int cutoff = 0;
    std::vector<double> sigma_levels = {0.0};
    certify::LogBase log_base = certify::LogBase::two;
    double tol = 1e-7;
    // rate
    double state_rate = 2.22e6;

    std::string hash_hex;  // FNV-1a of the canonical config text
};

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const auto& k : known)
            if (key == k) ok = true;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    reject_unknown(j, {"alphabet", "channel", "detection", "certify", "rate"}, path);

    RunConfig c;
    c.hash_hex = fnv1a_hex(j.dump());

    if (j.contains("alphabet")) {
        const json& a = j["alphabet"];
        reject_unknown(a, {"kind", "amplitude", "amplitudes", "priors"}, "alphabet");
        c.kind = a.value("kind", c.kind);
        c.amplitude = a.value("amplitude", c.amplitude);
        if (c.kind != "two_state" && c.kind != "four_state" && c.kind != "calibrated")
            throw ConfigError("alphabet.kind must be two_state, four_state or calibrated");
        if (c.kind == "calibrated") {
            if (!a.contains("amplitudes") || !a.contains("priors"))
                throw ConfigError("calibrated alphabet needs amplitudes and priors");
            for (const auto& pair : a["amplitudes"]) {
                if (!pair.is_array() || pair.size() != 2)
                    throw ConfigError("alphabet.amplitudes entries must be [re, im]");
                c.amplitudes.emplace_back(pair[0].get<double>(), pair[1].get<double>());
            }
            c.priors = a["priors"].get<std::vector<double>>();
        }
    }
    if (j.contains("channel")) {
        const json& ch = j["channel"];
        reject_unknown(ch,
                       {"eta", "excess_noise", "monitor_tap", "noise_at", "fixed_t",
                        "transmission_file", "beam", "n_transmission_samples"},
                       "channel");
        c.channel_params.eta = ch.value("eta", 1.0);
        c.channel_params.excess_noise = ch.value("excess_noise", 0.0);
        c.channel_params.monitor_tap = ch.value("monitor_tap", 0.0);
        std::string noise_at = ch.value("noise_at", "receiver");
        if (noise_at != "receiver" && noise_at != "sender")
            throw ConfigError("channel.noise_at must be receiver or sender");
        c.channel_params.noise_at_sender = noise_at == "sender";
        if (ch.contains("fixed_t")) c.fixed_t = ch["fixed_t"].get<double>();
        if (ch.contains("transmission_file"))
            c.transmission_file = ch["transmission_file"].get<std::string>();
        if (ch.contains("beam")) {
            const json& b = ch["beam"];
            reject_unknown(b, {"beam_radius", "aperture_radius", "jitter_sigma"},
                           "channel.beam");
            BeamSpec bs;
            bs.beam_radius = b.value("beam_radius", bs.beam_radius);
            bs.aperture_radius = b.value("aperture_radius", bs.aperture_radius);
            bs.jitter_sigma = b.value("jitter_sigma", bs.jitter_sigma);
            c.beam = bs;
        }
        c.n_transmission_samples = ch.value("n_transmission_samples", c.n_transmission_samples);
    }
    if (j.contains("detection")) {
        const json& d = j["detection"];
        reject_unknown(d, {"n_slots", "seed", "bin_width", "min_count", "raw_scale",
                           "lo_scales_with_t"},
                       "detection");
        c.n_slots = d.value("n_slots", c.n_slots);
        c.seed = d.value("seed", c.seed);
        c.bin_width = d.value("bin_width", c.bin_width);
        c.min_count = d.value("min_count", c.min_count);
        c.raw_scale = d.value("raw_scale", c.raw_scale);
        c.lo_scales_with_t = d.value("lo_scales_with_t", c.lo_scales_with_t);
    }
    if (j.contains("certify")) {
        const json& ce = j["certify"];
        reject_unknown(ce, {"cutoff", "sigma_levels", "log_base", "tol"}, "certify");
        c.cutoff = ce.value("cutoff", c.cutoff);
        if (ce.contains("sigma_levels"))
            c.sigma_levels = ce["sigma_levels"].get<std::vector<double>>();
        std::string base = ce.value("log_base", "2");
        if (base != "2" && base != "e") throw ConfigError("certify.log_base must be 2 or e");
        c.log_base = base == "2" ? certify::LogBase::two : certify::LogBase::e;
        c.tol = ce.value("tol", c.tol);
    }
    if (j.contains("rate")) {
        const json& r = j["rate"];
        reject_unknown(r, {"state_rate"}, "rate");
        c.state_rate = r.value("state_rate", c.state_rate);
        if (c.state_rate < 0.0) throw ConfigError("rate.state_rate must be >= 0");
    }
    return c;
}

alphabet::Alphabet make_alphabet(const RunConfig& c) {
    if (c.kind == "two_state") return alphabet::two_state(c.amplitude);
    if (c.kind == "four_state") return alphabet::four_state(c.amplitude);
    return alphabet::calibrated(c.amplitudes, c.priors);
}

std::string file_header(const RunConfig& c) {
    return std::string("cvlink ") + kVersion + " config=" + c.hash_hex;
}

// ---- histogram CSV (bin_lo,bin_hi,count,prob,retained) ----

void write_histogram_csv(std::ostream& out, const channel::TransmissionHistogram& h,
                         const std::string& header) {
    if (!header.empty()) out << "# " << header << "\n";
    out << "bin_lo,bin_hi,count,prob,retained\n";
    char buf[128];
    for (int i = 0; i < h.n_bins(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%lld,%.12g,%d\n", h.bin_edges[i],
                      h.bin_edges[i + 1], static_cast<long long>(h.counts[i]),
                      h.probabilities[i], h.retained[i] ? 1 : 0);
        out << buf;
    }
}

channel::TransmissionHistogram read_histogram_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open histogram file: " + path);
    channel::TransmissionHistogram h;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("bin_lo", 0) == 0) continue;
        double lo, hi, prob;
        long long count;
        int retained;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lld,%lf,%d", &lo, &hi, &count, &prob,
                        &retained) != 5)
            continue;
        if (h.bin_edges.empty()) h.bin_edges.push_back(lo);
        h.bin_edges.push_back(hi);
        h.counts.push_back(count);
        h.probabilities.push_back(prob);
        h.retained.push_back(retained != 0);
    }
    if (h.counts.empty()) throw ConfigError("histogram file has no bins: " + path);
    return h;
}

channel::TransmissionHistogram build_histogram(const RunConfig& c) {
    if (c.fixed_t) {
        double t = *c.fixed_t;
        channel::TransmissionHistogram h;
        h.bin_edges = {std::max(0.0, t - c.bin_width / 2),
                       std::min(1.0, t + c.bin_width / 2)};
        h.counts = {1};
        h.probabilities = {1.0};
        h.retained = {true};
        return h;
    }
    std::vector<double> samples;
    if (c.transmission_file) {
        samples = channel::read_transmission_file(*c.transmission_file);
        if (samples.empty())
            throw ConfigError("no transmission samples in " + *c.transmission_file);
    } else if (c.beam) {
        channel::BeamGeometry g{c.beam->beam_radius, c.beam->aperture_radius,
                                c.beam->jitter_sigma};
        samples = channel::sample_transmissions(g, c.n_transmission_samples, c.seed);
    } else {
        throw ConfigError("channel needs one of fixed_t, transmission_file or beam");
    }
    return channel::empirical_histogram(samples, c.bin_width, c.min_count);
}

// ---- stages (shared by the per-stage commands and `run`) ----

void stage_simulate(const RunConfig& c, const fs::path& dir) {
    fs::create_directories(dir);
    auto hist = build_histogram(c);
    auto a = make_alphabet(c);
    detection::SimulateOptions opt;
    opt.n_slots = c.n_slots;
    opt.seed = c.seed;
    opt.raw_scale = c.raw_scale;
    opt.lo_scales_with_t = c.lo_scales_with_t;
    auto rec = detection::simulate_records(a, hist, c.channel_params, opt);
    {
        std::ofstream out(dir / "histogram.csv");
        write_histogram_csv(out, hist, file_header(c));
    }
    {
        std::ofstream out(dir / "records.csv");
        detection::write_records(out, rec, file_header(c));
    }
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw ConfigError(std::string(what) + " file does not exist: " + path);
}

void stage_ingest(const RunConfig& c, const std::string& records_path,
                  const std::string& histogram_path, const fs::path& dir) {
    require_file(records_path, "records");
    require_file(histogram_path, "histogram");
    fs::create_directories(dir);
    auto hist = read_histogram_csv(histogram_path);
    detection::IngestStats stats;
    auto rec = detection::read_record_file(records_path, &stats);
    if (rec.empty()) throw ConfigError("no parseable records in " + records_path);
    auto a = make_alphabet(c);
    auto m = detection::bin_records(rec, hist, a.size(), c.min_count);
    std::ofstream out(dir / "moments.csv");
    std::ostringstream header;
    header << file_header(c) << " parsed=" << stats.parsed << " dropped=" << stats.dropped
           << " out_of_range=" << m.out_of_range;
    detection::write_moments_csv(out, m, header.str());
}

// returns true when every solve reported optimal
bool stage_certify(const RunConfig& c, const std::string& moments_path, int workers,
                   const fs::path& dir) {
    require_file(moments_path, "moments");
    fs::create_directories(dir);
    auto m = detection::read_moments_file(moments_path);
    auto a = make_alphabet(c);
    if (m.n_states() != a.size())
        throw ConfigError("moments file has " + std::to_string(m.n_states()) +
                          " states, alphabet has " + std::to_string(a.size()));
    int nc = c.cutoff > 0 ? c.cutoff : fock::default_cutoff(a.max_abs_amplitude());
    auto source = alphabet::source_model(a, nc);
    auto results = certify::certify_all(m, source, c.sigma_levels, workers, c.log_base,
                                        c.tol);
    bool all_optimal = true;
    for (const auto& r : results)
        if (r.result.status != sdp::SdpStatus::optimal) all_optimal = false;
    std::ofstream out(dir / "results.csv");
    std::ostringstream header;
    header << file_header(c) << " cutoff=" << nc << " log_base="
           << (c.log_base == certify::LogBase::two ? "2" : "e");
    certify::write_results_csv(out, results, header.str());
    return all_optimal;
}

void stage_rate(const RunConfig& c, const std::string& results_path, const fs::path& dir) {
    require_file(results_path, "results");
    fs::create_directories(dir);
    auto results = certify::read_results_file(results_path);
    if (results.empty()) throw ConfigError("no results in " + results_path);
    auto rep = rates::aggregate(results, c.state_rate, c.log_base);
    {
        std::ofstream out(dir / "rate.csv");
        rates::write_rate_csv(out, rep, file_header(c));
    }
    {
        std::ofstream out(dir / "summary.txt");
        out << "# " << file_header(c) << "\n";
        rates::write_summary(out, rep);
    }
}

void stage_sweep(const RunConfig& c, double t_eff, const std::vector<double>& amplitudes,
                 const std::vector<double>& epsilons, const fs::path& dir) {
    fs::create_directories(dir);
    certify::CurveOptions opt;
    opt.cutoff = c.cutoff;
    opt.tol = c.tol;
    opt.base = c.log_base;
    std::ofstream curves(dir / "curves.csv");
    curves << "# " << file_header(c) << " t_eff=" << t_eff << "\n";
    curves << "epsilon,amplitude,two_state_negativity,four_state_negativity\n";
    for (double eps : epsilons) {
        auto two = certify::theoretical_curve(certify::AlphabetKind::two_state, t_eff,
                                              eps, amplitudes, opt);
        auto four = certify::theoretical_curve(certify::AlphabetKind::four_state, t_eff,
                                               eps, amplitudes, opt);
        for (std::size_t i = 0; i < amplitudes.size(); ++i) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%g,%g,%.9g,%.9g\n", eps, amplitudes[i],
                          two[i], four[i]);
            curves << buf;
        }
    }
    auto tab = certify::compare_alphabets(t_eff, epsilons, amplitudes, opt);
    std::ofstream cmp(dir / "comparison.csv");
    cmp << "# " << file_header(c) << " t_eff=" << t_eff << "\n";
    cmp << "epsilon,two_state_max,two_state_argmax,four_state_max,four_state_argmax\n";
    for (const auto& row : tab.rows) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%g,%.9g,%g,%.9g,%g\n", row.epsilon,
                      row.two_state_max, row.two_state_argmax, row.four_state_max,
                      row.four_state_argmax);
        cmp << buf;
    }
    cmp << "# two_state_zero_epsilon="
        << (tab.two_state_zero_epsilon ? std::to_string(*tab.two_state_zero_epsilon)
                                       : "none")
        << " four_state_zero_epsilon="
        << (tab.four_state_zero_epsilon ? std::to_string(*tab.four_state_zero_epsilon)
                                        : "none")
        << "\n";
}

void stage_report(const fs::path& dir, std::ostream& out) {
    if (!fs::exists(dir)) throw ConfigError("run directory does not exist: " + dir.string());
    out << "run report: " << dir.string() << "\n";
    auto show_head = [&](const char* file, int lines) {
        fs::path p = dir / file;
        if (!fs::exists(p)) return;
        out << "\n== " << file << " ==\n";
        std::ifstream in(p);
        std::string line;
        for (int i = 0; i < lines && std::getline(in, line); ++i) out << line << "\n";
    };
    if (fs::exists(dir / "histogram.csv")) {
        auto h = read_histogram_csv((dir / "histogram.csv").string());
        int nret = 0;
        for (int i = 0; i < h.n_bins(); ++i)
            if (h.retained[i]) ++nret;
        out << "histogram: " << h.n_bins() << " bins, " << nret
            << " retained, mean T = " << h.mean()
            << ", retained mass = " << h.retained_mass() << "\n";
    }
    if (fs::exists(dir / "results.csv")) {
        auto rs = certify::read_results_file((dir / "results.csv").string());
        int opt = 0;
        for (const auto& r : rs)
            if (r.result.status == sdp::SdpStatus::optimal) ++opt;
        out << "certifications: " << rs.size() << " solves, " << opt << " optimal\n";
    }
    show_head("summary.txt", 12);
    show_head("comparison.csv", 12);
}

std::vector<double> parse_list(const std::string& csv, const char* what) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError(std::string("cannot parse ") + what + " list entry '" +
                              item + "'");
        }
    }
    if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cvlink: fading-channel CV link simulation and entanglement certification"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::string records_path, histogram_path, moments_path, results_path, report_dir;
    std::string sigma_csv, log_base_flag, amplitudes_csv = "0.6,0.8,1.0,1.2";
    std::string epsilons_csv = "0.01";
    double t_eff = 0.63;
    int workers = 1;
    std::int64_t seed_flag = -1;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* c = cmd->add_option("--config", config_path, "configuration file (JSON)");
        if (needs_config) c->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed_flag, "override detection.seed");
        cmd->add_option("--workers", workers, "worker threads for independent solves");
        cmd->add_option("--sigma", sigma_csv, "comma-separated sigma levels (e.g. 0,1,2,3)");
        cmd->add_option("--log-base", log_base_flag, "log-negativity base: 2 or e")
            ->check(CLI::IsMember({"2", "e"}));
    };

    auto* sim = app.add_subcommand("simulate", "simulate slot records and the histogram");
    add_common(sim, true);
    auto* ing = app.add_subcommand("ingest", "bin records into conditional moments");
    add_common(ing, true);
    ing->add_option("--records", records_path, "slot record file")->required();
    ing->add_option("--histogram", histogram_path, "histogram CSV")->required();
    auto* cer = app.add_subcommand("certify", "certify negativity per bin and sigma");
    add_common(cer, true);
    cer->add_option("--moments", moments_path, "binned moments CSV")->required();
    auto* swp = app.add_subcommand("sweep", "theoretical curves over amplitude and noise");
    add_common(swp, true);
    swp->add_option("--t-eff", t_eff, "effective transmission for the curves");
    swp->add_option("--amplitudes", amplitudes_csv, "comma-separated amplitude grid");
    swp->add_option("--epsilons", epsilons_csv, "comma-separated excess-noise grid");
    auto* rat = app.add_subcommand("rate", "aggregate results into a transfer rate");
    add_common(rat, true);
    rat->add_option("--results", results_path, "certification results CSV")->required();
    auto* run = app.add_subcommand("run", "simulate, ingest, certify and rate in one shot");
    add_common(run, true);
    auto* rep = app.add_subcommand("report", "summarize a run directory");
    rep->add_option("--dir", report_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (rep->parsed()) {
            stage_report(report_dir, std::cout);
            return 0;
        }
        RunConfig cfg = load_config(config_path);
        if (seed_flag >= 0) cfg.seed = std::uint64_t(seed_flag);
        if (!sigma_csv.empty()) cfg.sigma_levels = parse_list(sigma_csv, "sigma");
        if (!log_base_flag.empty())
            cfg.log_base = log_base_flag == "2" ? certify::LogBase::two : certify::LogBase::e;

        fs::path dir = out_dir;
        bool all_optimal = true;
        try {
            if (sim->parsed()) {
                stage_simulate(cfg, dir);
            } else if (ing->parsed()) {
                stage_ingest(cfg, records_path, histogram_path, dir);
            } else if (cer->parsed()) {
                all_optimal = stage_certify(cfg, moments_path, workers, dir);
            } else if (swp->parsed()) {
                stage_sweep(cfg, t_eff, parse_list(amplitudes_csv, "amplitude"),
                            parse_list(epsilons_csv, "epsilon"), dir);
            } else if (rat->parsed()) {
                stage_rate(cfg, results_path, dir);
            } else if (run->parsed()) {
                stage_simulate(cfg, dir);
                stage_ingest(cfg, (dir / "records.csv").string(),
                             (dir / "histogram.csv").string(), dir);
                all_optimal = stage_certify(cfg, (dir / "moments.csv").string(), workers, dir);
                stage_rate(cfg, (dir / "results.csv").string(), dir);
            }
        } catch (const ConfigError&) {
            throw;  // input problems keep the validation exit code
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
        if (!all_optimal) {
            std::cerr << "warning: non-optimal solver status present; results written\n";
            return 3;
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
