// causalprobe: black-box model interpretation via causal attribution.
//
// Subcommands:
//   simulate   generate benchmark datasets (synthetic classifier inputs,
//              linear SCM with known ground truth)
//   probe      run a model (MLP spec file or external command) over an
//              inputs CSV and record the observational table
//   attribute  estimate the causal effect of every feature on the model
//              output and write attribution reports (JSON + markdown)
//   explain    contrast two samples through a prior attribution report
//   report     cross-estimator agreement matrix from one or more reports
//
// Exit codes: 0 success, 2 usage/input error, 3 attribution finished but some
// estimator failed on some feature (reports still written).

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "causalprobe/blackbox.hpp"
#include "causalprobe/config.hpp"
#include "causalprobe/core.hpp"
#include "causalprobe/csv.hpp"
#include "causalprobe/report_io.hpp"
#include "causalprobe/synthgen.hpp"

namespace cp = causalprobe;

namespace {

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw cp::IoError("cannot write " + path);
    f << contents;
}

void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                      const cp::MatrixXd& m, const cp::VectorXd* extra = nullptr) {
    std::ostringstream os;
    cp::write_csv_row(os, header);
    std::vector<std::string> row(header.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row[static_cast<std::size_t>(j)] = cp::format_double(m(i, j));
        if (extra) row.back() = cp::format_double((*extra)(i));
        cp::write_csv_row(os, row);
    }
    write_file(path, os.str());
}

struct LoadedTable {
    cp::MatrixXd values;
    std::vector<std::string> names;
};

LoadedTable load_numeric_csv(const std::string& path) {
    const cp::CsvTable t = cp::read_csv_file(path);
    LoadedTable out;
    out.names = t.header;
    out.values.resize(static_cast<Eigen::Index>(t.rows.size()),
                      static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < t.header.size(); ++j)
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                cp::parse_double(t.rows[i][j]);
    return out;
}

cp::ModelHandle make_model(const std::string& spec, double timeout, bool hard_labels) {
    if (spec.rfind("cmd:", 0) == 0) return cp::ModelHandle::command(spec.substr(4), timeout);
    return cp::ModelHandle::mlp(cp::load_mlp_file(spec), hard_labels);
}

cp::Dataset dataset_from_csv(const std::string& path, const std::string& outcome_col,
                             const std::vector<std::string>& force_binary,
                             const std::vector<std::string>& force_continuous) {
    const LoadedTable t = load_numeric_csv(path);
    Eigen::Index yc = -1;
    for (std::size_t j = 0; j < t.names.size(); ++j)
        if (t.names[j] == outcome_col) yc = static_cast<Eigen::Index>(j);
    if (yc < 0) throw cp::LookupError("outcome column '" + outcome_col + "' not found in " + path);
    const Eigen::Index n = t.values.rows(), m = t.values.cols() - 1;
    if (m < 1) throw cp::InvalidInputError("dataset has no feature columns besides the outcome");
    cp::MatrixXd x(n, m);
    std::vector<std::string> names;
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < t.values.cols(); ++j) {
        if (j == yc) continue;
        x.col(c++) = t.values.col(j);
        names.push_back(t.names[static_cast<std::size_t>(j)]);
    }
    auto specs = cp::detect_feature_kinds(x, names);
    for (auto& s : specs) {
        for (const auto& b : force_binary)
            if (s.name == b) s.kind = cp::FeatureKind::binary;
        for (const auto& cname : force_continuous)
            if (s.name == cname) s.kind = cp::FeatureKind::continuous;
    }
    return cp::Dataset(std::move(x), std::move(specs), t.values.col(yc));
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"black-box model interpretation via causal attribution"};
    app.require_subcommand(1);

    // ---- simulate ----
    auto* sim = app.add_subcommand("simulate", "generate benchmark data");
    std::string sim_kind = "synthetic", sim_out;
    long long sim_n = 1000;
    std::uint64_t sim_seed = 0;
    double sim_sd = 0.2, sim_signal = 1.0, sim_gamma = 0.8, sim_beta = 2.0;
    sim->add_option("--kind", sim_kind, "synthetic | linear-scm")
        ->check(CLI::IsMember({"synthetic", "linear-scm"}));
    sim->add_option("--n", sim_n, "sample count")->required();
    sim->add_option("--seed", sim_seed, "PRNG seed")->required();
    sim->add_option("--out", sim_out, "output CSV")->required();
    sim->add_option("--sd", sim_sd, "noise sd (synthetic)");
    sim->add_option("--signal-mean", sim_signal, "class mean of f1..f3 (synthetic)");
    sim->add_option("--gamma", sim_gamma, "confounding strength (linear-scm)");
    sim->add_option("--beta", sim_beta, "true causal effect (linear-scm)");

    // ---- probe ----
    auto* probe = app.add_subcommand("probe", "run a model over an inputs CSV");
    std::string probe_model, probe_inputs, probe_out, probe_outcome_name = "y";
    double probe_timeout = 30.0;
    bool probe_hard = false;
    probe->add_option("--model", probe_model, "MLP spec JSON, or cmd:<shell command>")->required();
    probe->add_option("--inputs", probe_inputs, "inputs CSV")->required();
    probe->add_option("--out", probe_out, "output CSV (inputs + outcome column)")->required();
    probe->add_option("--outcome-name", probe_outcome_name, "name of the added outcome column");
    probe->add_option("--timeout", probe_timeout, "per-response timeout, seconds");
    probe->add_flag("--hard-labels", probe_hard, "emit 0/1 labels instead of probabilities");

    // ---- attribute ----
    auto* attr = app.add_subcommand("attribute", "per-feature causal attribution");
    std::string attr_data, attr_outcome = "y", attr_model, attr_inputs, attr_config;
    std::string attr_json, attr_md, attr_estimators, attr_inference, attr_binary, attr_continuous;
    double attr_alpha = -1.0, attr_trim = -1.0, attr_delta = -1.0, attr_timeout = 30.0;
    long long attr_seed = -1, attr_workers = -1, attr_reps = -1;
    bool attr_hard = false;
    attr->add_option("--data", attr_data, "dataset CSV with an outcome column");
    attr->add_option("--outcome", attr_outcome, "outcome column name");
    attr->add_option("--model", attr_model, "probe this model instead of reading --data");
    attr->add_option("--inputs", attr_inputs, "inputs CSV for --model");
    attr->add_option("--config", attr_config, "JSON config file");
    attr->add_option("--out-json", attr_json, "write the full report JSON here");
    attr->add_option("--out-md", attr_md, "write the markdown table here");
    attr->add_option("--estimators", attr_estimators, "comma list: iptw,cbps,npcbps,pswgbm,optweight,super");
    attr->add_option("--alpha", attr_alpha, "significance level");
    attr->add_option("--seed", attr_seed, "PRNG seed");
    attr->add_option("--workers", attr_workers, "worker thread count");
    attr->add_option("--inference", attr_inference, "sandwich | bootstrap");
    attr->add_option("--bootstrap-reps", attr_reps, "bootstrap replicate count");
    attr->add_option("--trim-percentile", attr_trim, "weight trim percentile");
    attr->add_option("--optweight-delta", attr_delta, "optweight balance tolerance");
    attr->add_option("--binary", attr_binary, "comma list of features to force binary");
    attr->add_option("--continuous", attr_continuous, "comma list of features to force continuous");
    attr->add_option("--timeout", attr_timeout, "probe timeout, seconds");
    attr->add_flag("--hard-labels", attr_hard, "probe with 0/1 labels");

    // ---- explain ----
    auto* expl = app.add_subcommand("explain", "contrastive explanation of two samples");
    std::string expl_report, expl_data, expl_estimator, expl_json, expl_text;
    std::string expl_row_a, expl_row_b;
    long long expl_ia = -1, expl_ib = -1;
    expl->add_option("--report", expl_report, "attribution report JSON")->required();
    expl->add_option("--data", expl_data, "dataset CSV the samples come from");
    expl->add_option("--index-a", expl_ia, "row index of sample A (0-based)");
    expl->add_option("--index-b", expl_ib, "row index of sample B (0-based)");
    expl->add_option("--row-a", expl_row_a, "inline comma-separated feature vector A");
    expl->add_option("--row-b", expl_row_b, "inline comma-separated feature vector B");
    expl->add_option("--estimator", expl_estimator, "which report to use when several are present");
    expl->add_option("--out-json", expl_json, "write explanation JSON here");
    expl->add_option("--out-text", expl_text, "write readable explanation here");

    // ---- report ----
    auto* rept = app.add_subcommand("report", "cross-estimator agreement summary");
    std::vector<std::string> rept_files;
    std::string rept_out;
    rept->add_option("files", rept_files, "report JSON files")->required();
    rept->add_option("--out", rept_out, "write agreement markdown here (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (*sim) {
            if (sim_n < 1) throw cp::InvalidInputError("--n must be >= 1");
            if (sim_kind == "synthetic") {
                cp::SynthConfig cfg;
                cfg.n = sim_n;
                cfg.seed = sim_seed;
                cfg.sd = sim_sd;
                cfg.signal_mean = sim_signal;
                const cp::SynthData data = cp::gen_synthetic(cfg);
                std::vector<std::string> header = cp::synth_feature_names();
                header.push_back("label");
                cp::MatrixXd all(data.inputs.rows(), 13);
                all.leftCols(12) = data.inputs;
                all.col(12) = data.labels;
                write_matrix_csv(sim_out, header, all);
            } else {
                cp::LinearScmConfig cfg;
                cfg.n = sim_n;
                cfg.seed = sim_seed;
                cfg.gamma = sim_gamma;
                cfg.beta = sim_beta;
                const cp::LinearScmData data = cp::gen_linear_scm(cfg);
                cp::MatrixXd all(data.dataset.n_samples(), 3);
                all.leftCols(2) = data.dataset.features();
                all.col(2) = data.dataset.outcome();
                write_matrix_csv(sim_out, {"t", "x", "y"}, all);
                nlohmann::json truth;
                truth["ace"] = data.true_ace;
                truth["gamma"] = cfg.gamma;
                truth["beta"] = cfg.beta;
                truth["n"] = cfg.n;
                truth["seed"] = cfg.seed;
                write_file(sim_out + ".truth.json", truth.dump(2) + "\n");
            }
            return 0;
        }

        if (*probe) {
            const LoadedTable in = load_numeric_csv(probe_inputs);
            const cp::ModelHandle model = make_model(probe_model, probe_timeout, probe_hard);
            const cp::VectorXd y = cp::predict_batch(model, in.values);
            std::vector<std::string> header = in.names;
            header.push_back(probe_outcome_name);
            cp::MatrixXd all(in.values.rows(), in.values.cols() + 1);
            all.leftCols(in.values.cols()) = in.values;
            all.col(in.values.cols()) = y;
            write_matrix_csv(probe_out, header, all);
            return 0;
        }

        if (*attr) {
            cp::RunConfig cfg;
            if (!attr_config.empty()) cfg = cp::load_config_file(attr_config);
            if (!attr_estimators.empty()) {
                cfg.estimators.clear();
                for (const auto& name : split_commas(attr_estimators))
                    cfg.estimators.push_back(cp::estimator_from_name(name));
            }
            if (attr_alpha >= 0.0) cfg.alpha = attr_alpha;
            if (attr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(attr_seed);
            if (attr_workers >= 1) cfg.workers = static_cast<int>(attr_workers);
            if (attr_reps >= 1) cfg.bootstrap_reps = static_cast<int>(attr_reps);
            if (!attr_inference.empty()) {
                if (attr_inference == "sandwich") cfg.inference = cp::InferenceMethod::sandwich;
                else if (attr_inference == "bootstrap") cfg.inference = cp::InferenceMethod::bootstrap;
                else throw cp::InvalidInputError("--inference must be sandwich or bootstrap");
            }
            if (attr_trim > 0.0) cfg.attribution.weighting.trim_percentile = attr_trim;
            if (attr_delta > 0.0) cfg.attribution.weighting.optweight.delta = attr_delta;
            cp::apply_worker_env(cfg);
            cfg.validate();

            std::optional<cp::Dataset> data;
            if (!attr_model.empty()) {
                if (attr_inputs.empty())
                    throw cp::InvalidInputError("--model requires --inputs to probe");
                const LoadedTable in = load_numeric_csv(attr_inputs);
                const cp::ModelHandle model = make_model(attr_model, attr_timeout, attr_hard);
                auto specs = cp::detect_feature_kinds(in.values, in.names);
                for (auto& s : specs) {
                    for (const auto& b : split_commas(attr_binary))
                        if (s.name == b) s.kind = cp::FeatureKind::binary;
                    for (const auto& c : split_commas(attr_continuous))
                        if (s.name == c) s.kind = cp::FeatureKind::continuous;
                }
                data.emplace(cp::build_observational_table(model, in.values, std::move(specs)));
            } else if (!attr_data.empty()) {
                data.emplace(dataset_from_csv(attr_data, attr_outcome, split_commas(attr_binary),
                                              split_commas(attr_continuous)));
            } else {
                throw cp::InvalidInputError("attribute needs --data or --model + --inputs");
            }

            const auto reports =
                cp::attribute_all(*data, cfg.estimators, cfg.alpha, cfg.seed, cfg.options());
            if (!attr_json.empty()) write_file(attr_json, cp::reports_to_json(reports).dump(2) + "\n");
            if (!attr_md.empty()) write_file(attr_md, cp::reports_to_markdown(reports));
            if (attr_json.empty() && attr_md.empty())
                std::cout << cp::reports_to_markdown(reports);
            for (const auto& r : reports)
                if (!r.failures.empty()) {
                    for (const auto& [feat, msg] : r.failures)
                        std::cerr << "warning: " << cp::estimator_name(r.estimator) << " failed on "
                                  << feat << ": " << msg << "\n";
                    return 3;
                }
            return 0;
        }

        if (*expl) {
            const auto reports = cp::load_reports_file(expl_report);
            const cp::AttributionReport* rep = &reports.front();
            if (!expl_estimator.empty()) {
                rep = nullptr;
                const auto want = cp::estimator_from_name(expl_estimator);
                for (const auto& r : reports)
                    if (r.estimator == want) rep = &r;
                if (!rep) throw cp::LookupError("report file has no estimator " + expl_estimator);
            }
            std::vector<std::string> feature_order;
            for (const auto& e : rep->estimates) feature_order.push_back(e.feature);
            for (const auto& [name, msg] : rep->failures)
                if (std::find(feature_order.begin(), feature_order.end(), name) ==
                    feature_order.end())
                    feature_order.push_back(name);

            cp::VectorXd xa, xb;
            auto parse_inline = [&](const std::string& s) {
                const auto parts = split_commas(s);
                cp::VectorXd v(static_cast<Eigen::Index>(parts.size()));
                for (std::size_t i = 0; i < parts.size(); ++i)
                    v(static_cast<Eigen::Index>(i)) = cp::parse_double(parts[i]);
                return v;
            };
            if (!expl_row_a.empty() && !expl_row_b.empty()) {
                xa = parse_inline(expl_row_a);
                xb = parse_inline(expl_row_b);
            } else if (expl_ia >= 0 && expl_ib >= 0) {
                if (expl_data.empty())
                    throw cp::InvalidInputError("--index-a/--index-b need --data");
                const LoadedTable t = load_numeric_csv(expl_data);
                cp::MatrixXd feats(t.values.rows(),
                                   static_cast<Eigen::Index>(feature_order.size()));
                Eigen::Index c = 0;
                for (const auto& f : feature_order) {
                    Eigen::Index col = -1;
                    for (std::size_t j = 0; j < t.names.size(); ++j)
                        if (t.names[j] == f) col = static_cast<Eigen::Index>(j);
                    if (col < 0) throw cp::LookupError("data file lacks feature " + f);
                    feats.col(c++) = t.values.col(col);
                }
                if (expl_ia >= t.values.rows() || expl_ib >= t.values.rows())
                    throw cp::InvalidInputError("sample index out of range");
                xa = feats.row(expl_ia).transpose();
                xb = feats.row(expl_ib).transpose();
            } else {
                throw cp::InvalidInputError(
                    "explain needs --row-a/--row-b or --index-a/--index-b with --data");
            }

            const auto ex = cp::contrastive_explain(*rep, feature_order, xa, xb);
            const std::string text = cp::explanation_to_text(ex);
            if (!expl_json.empty()) write_file(expl_json, cp::explanation_to_json(ex).dump(2) + "\n");
            if (!expl_text.empty()) write_file(expl_text, text);
            if (expl_json.empty() && expl_text.empty()) std::cout << text;
            return 0;
        }

        if (*rept) {
            std::vector<cp::AttributionReport> all;
            for (const auto& f : rept_files)
                for (auto& r : cp::load_reports_file(f)) all.push_back(std::move(r));
            const auto matrix = cp::agreement(all);
            const std::string md = cp::agreement_to_markdown(matrix);
            if (!rept_out.empty()) write_file(rept_out, md);
            else std::cout << md;
            return 0;
        }
    } catch (const cp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
