#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalprobe/attribution.hpp"
#include "causalprobe/core.hpp"

namespace causalprobe {

inline nlohmann::json estimate_to_json(const EffectEstimate& e) {
    nlohmann::json j;
    j["feature"] = e.feature;
    j["mu"] = e.mu;
    j["se"] = e.se;
    j["p_value"] = e.p_value;
    j["ci_low"] = e.ci_low;
    j["ci_high"] = e.ci_high;
    j["estimator"] = estimator_name(e.estimator);
    if (e.exp_mu) j["exp_mu"] = *e.exp_mu;
    if (!e.warnings.empty()) j["warnings"] = e.warnings;
    return j;
}

inline EffectEstimate estimate_from_json(const nlohmann::json& j) {
    EffectEstimate e;
    e.feature = j.at("feature").get<std::string>();
    e.mu = j.at("mu").get<double>();
    e.se = j.at("se").get<double>();
    e.p_value = j.at("p_value").get<double>();
    e.ci_low = j.at("ci_low").get<double>();
    e.ci_high = j.at("ci_high").get<double>();
    e.estimator = estimator_from_name(j.at("estimator").get<std::string>());
    if (j.contains("exp_mu")) e.exp_mu = j["exp_mu"].get<double>();
    if (j.contains("warnings")) e.warnings = j["warnings"].get<std::vector<std::string>>();
    return e;
}

inline nlohmann::json report_to_json(const AttributionReport& r) {
    nlohmann::json j;
    j["alpha"] = r.alpha;
    j["estimator"] = estimator_name(r.estimator);
    j["attributions"] = nlohmann::json::object();
    for (const auto& [name, a] : r.attributions) j["attributions"][name] = a;
    j["estimates"] = nlohmann::json::array();
    for (const auto& e : r.estimates) j["estimates"].push_back(estimate_to_json(e));
    j["failures"] = nlohmann::json::object();
    for (const auto& [name, msg] : r.failures) j["failures"][name] = msg;
    return j;
}

inline AttributionReport report_from_json(const nlohmann::json& j) {
    AttributionReport r;
    r.alpha = j.at("alpha").get<double>();
    r.estimator = estimator_from_name(j.at("estimator").get<std::string>());
    for (const auto& [name, a] : j.at("attributions").items()) r.attributions[name] = a.get<double>();
    for (const auto& je : j.at("estimates")) r.estimates.push_back(estimate_from_json(je));
    if (j.contains("failures"))
        for (const auto& [name, msg] : j["failures"].items()) r.failures[name] = msg.get<std::string>();
    return r;
}

inline nlohmann::json reports_to_json(const std::vector<AttributionReport>& reports) {
    nlohmann::json j;
    j["reports"] = nlohmann::json::array();
    for (const auto& r : reports) j["reports"].push_back(report_to_json(r));
    return j;
}

inline std::vector<AttributionReport> reports_from_json(const nlohmann::json& j) {
    std::vector<AttributionReport> out;
    if (j.contains("reports")) {
        for (const auto& jr : j["reports"]) out.push_back(report_from_json(jr));
    } else {
        out.push_back(report_from_json(j));  // single-report file
    }
    return out;
}

inline std::vector<AttributionReport> load_reports_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad report file " + path + ": " + e.what());
    }
    return reports_from_json(j);
}

namespace detail {

inline std::string fixed2(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string p_display(double p) {
    if (p < 0.01) return "<0.01";
    return fixed2(p);
}

}  // namespace detail

/// Features x estimators table with an Est. and a P column per estimator.
/// Failed cells render as "--".
inline std::string reports_to_markdown(const std::vector<AttributionReport>& reports) {
    if (reports.empty()) return "";
    std::vector<std::string> features;
    for (const auto& e : reports.front().estimates) features.push_back(e.feature);
    for (const auto& [name, msg] : reports.front().failures)
        if (std::find(features.begin(), features.end(), name) == features.end())
            features.push_back(name);

    std::ostringstream md;
    md << "| Feature |";
    for (const auto& r : reports) {
        const std::string n = estimator_name(r.estimator);
        md << " " << n << " Est. | " << n << " P |";
    }
    md << "\n|---|";
    for (std::size_t i = 0; i < reports.size(); ++i) md << "---|---|";
    md << "\n";
    for (const auto& f : features) {
        md << "| " << f << " |";
        for (const auto& r : reports) {
            const EffectEstimate* found = nullptr;
            for (const auto& e : r.estimates)
                if (e.feature == f) {
                    found = &e;
                    break;
                }
            if (!found) {
                md << " -- | -- |";
            } else {
                md << " " << detail::fixed2(found->mu) << " | " << detail::p_display(found->p_value)
                   << " |";
            }
        }
        md << "\n";
    }
    return md.str();
}

inline const char* cell_status_name(CellStatus s) {
    switch (s) {
        case CellStatus::zero: return "0";
        case CellStatus::positive: return "+";
        case CellStatus::negative: return "-";
        case CellStatus::failed: return "x";
    }
    return "?";
}

/// Agreement grid as markdown plus consensus / disputed feature lists.
inline std::string agreement_to_markdown(const AgreementMatrix& m) {
    std::ostringstream md;
    md << "| Feature |";
    for (const auto e : m.estimators) md << " " << estimator_name(e) << " |";
    md << " consensus |\n|---|";
    for (std::size_t i = 0; i < m.estimators.size(); ++i) md << "---|";
    md << "---|\n";
    for (std::size_t fi = 0; fi < m.features.size(); ++fi) {
        md << "| " << m.features[fi] << " |";
        for (std::size_t r = 0; r < m.estimators.size(); ++r)
            md << " " << cell_status_name(m.cells[fi][r]) << " |";
        md << (m.consensus[fi] ? " yes |" : " **disputed** |") << "\n";
    }
    md << "\nConsensus on " << m.n_consensus << "/" << m.features.size() << " features.\n";
    bool any = false;
    for (std::size_t fi = 0; fi < m.features.size(); ++fi) {
        if (!m.consensus[fi]) {
            md << (any ? ", " : "Disputed: ") << m.features[fi];
            any = true;
        }
    }
    if (any) md << "\n";
    return md.str();
}

inline nlohmann::json explanation_to_json(const ContrastiveExplanation& ex) {
    nlohmann::json j;
    auto va = nlohmann::json::array(), vb = nlohmann::json::array();
    for (Eigen::Index i = 0; i < ex.sample_a.size(); ++i) va.push_back(ex.sample_a(i));
    for (Eigen::Index i = 0; i < ex.sample_b.size(); ++i) vb.push_back(ex.sample_b(i));
    j["sample_a"] = std::move(va);
    j["sample_b"] = std::move(vb);
    j["entries"] = nlohmann::json::array();
    for (const auto& e : ex.entries) {
        nlohmann::json je;
        je["feature"] = e.feature;
        je["attribution"] = e.attribution;
        je["delta"] = e.delta;
        je["contribution"] = e.contribution;
        j["entries"].push_back(std::move(je));
    }
    return j;
}

inline std::string explanation_to_text(const ContrastiveExplanation& ex) {
    std::ostringstream os;
    bool any_nonzero = false;
    for (const auto& e : ex.entries)
        if (e.contribution != 0.0) any_nonzero = true;
    if (!any_nonzero) {
        os << "No causally attributed feature differs between the two samples; "
              "the output difference is not explained by the attributed features.\n";
        return os.str();
    }
    os << "Causally attributed features, ranked by contribution to the output difference:\n";
    int rank = 1;
    for (const auto& e : ex.entries) {
        os << "  " << rank++ << ". " << e.feature << ": attribution " << detail::fixed2(e.attribution)
           << ", value shift " << detail::fixed2(e.delta) << ", contribution "
           << detail::fixed2(e.contribution) << "\n";
    }
    return os.str();
}

}  // namespace causalprobe
