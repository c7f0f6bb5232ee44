#pragma once

#include <atomic>
#include <thread>

#include "gnnprop/backdoor.hpp"
#include "gnnprop/mining.hpp"
#include "gnnprop/serialize.hpp"

namespace gnnprop {

struct PipelineConfig {
    uint64_t seed = 0;
    double threshold = 0.8;  // occlusion keep threshold
    double min_support = 0.1;
    int top_k = 5;
    int max_structure_nodes = 5;
    int match_cap = 100000;
    double tau_s = 0.05;
    double unnoticeable = 0.1;
    double override_rate = 0.8;
    long verify_budget = 4000;
    int jobs = 0;  // 0 = hardware concurrency

    BackdoorThresholds backdoor_thresholds() const { return {unnoticeable, tau_s, override_rate}; }
};

template <typename F>
auto parallel_map(int n, int jobs, F&& fn) {
    using R = decltype(fn(0));
    std::vector<R> out(n);
    if (jobs == 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) out[i] = fn(i);
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < std::min(jobs, n); ++t) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
    return out;
}

// ---------------------------------------------------------------------------
// Inference pipeline
// ---------------------------------------------------------------------------

struct PropertyRecord {
    int structure_idx = 0;
    std::string objective;
    StructProperty iso;             // structure-specific property (exact isomorphism)
    std::optional<DynProperty> dyn; // relaxed + dynamic form (verified bases only)
};

struct InferenceResult {
    PipelineConfig config;
    std::vector<MinedStructure> structures;
    std::vector<PropertyRecord> records;
};

/// ExtractStructures -> per-structure inference -> relax -> dynamic analysis,
/// over every objective of the model.
inline InferenceResult run_infer(const Gnn& model, const Dataset& data, const PipelineConfig& cfg) {
    model.validate();
    data.validate();
    if (data.graphs.empty()) throw ValidationError("infer: empty dataset");
    if (data.node_dim != model.node_dim || data.edge_dim != model.edge_dim)
        throw ValidationError("infer: dataset dims do not match model");

    InferenceResult result;
    result.config = cfg;

    // stage 1: influential substructures, one per (graph, node) prediction
    std::vector<std::pair<int, int>> targets;
    for (size_t gi = 0; gi < data.graphs.size(); ++gi)
        for (int v = 0; v < data.graphs[gi].node_count; ++v)
            targets.push_back({static_cast<int>(gi), v});
    std::vector<Structure> influences = parallel_map(
        static_cast<int>(targets.size()), cfg.jobs, [&](int i) {
            auto [gi, v] = targets[i];
            return influence_structure(model, data.graphs[gi], v, cfg.threshold);
        });

    // stage 2: frequent mining
    result.structures =
        mine_frequent(influences, cfg.min_support, cfg.max_structure_nodes, cfg.top_k);

    // stage 3/4: per-structure property inference, relaxation, dynamics
    for (size_t si = 0; si < result.structures.size(); ++si) {
        const Structure& s = result.structures[si].structure;
        std::vector<std::pair<int, Match>> matches;
        bool truncated = false;
        for (size_t gi = 0; gi < data.graphs.size(); ++gi) {
            MatchSet ms = enumerate_subiso_matches(data.graphs[gi], s, cfg.match_cap);
            truncated = truncated || ms.truncated;
            for (Match& match : ms.matches)
                if (static_cast<int>(matches.size()) < cfg.match_cap)
                    matches.push_back({static_cast<int>(gi), std::move(match)});
        }
        if (matches.empty()) continue;
        LoweredModel lm = lower(model, s);
        std::vector<TraceRecord> traces = collect_traces(lm, data, matches);
        for (const auto& [name, obj] : model.objectives) {
            InferParams params;
            params.verify_budget = cfg.verify_budget;
            std::vector<StructProperty> props = infer_properties(lm, s, name, obj, traces, params);
            for (StructProperty& p : props) {
                PropertyRecord rec;
                rec.structure_idx = static_cast<int>(si);
                rec.objective = name;
                rec.iso = p;
                if (p.verified)
                    rec.dyn = dynamic_analysis(p, model, data, TreeParams{}, cfg.match_cap);
                result.records.push_back(std::move(rec));
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Binary-feature normalization (for reports and ground-truth comparisons)
// ---------------------------------------------------------------------------

/// Which feature columns only ever take values 0 and 1 in the dataset.
struct BinaryColumns {
    std::vector<char> node;
    std::vector<char> edge;
};

inline BinaryColumns binary_columns(const Dataset& d) {
    BinaryColumns out;
    out.node.assign(d.node_dim, 1);
    out.edge.assign(d.edge_dim, 1);
    for (const Graph& g : d.graphs) {
        for (int i = 0; i < g.node_count; ++i)
            for (int c = 0; c < d.node_dim; ++c) {
                double v = g.node_features(i, c);
                if (v != 0.0 && v != 1.0) out.node[c] = 0;
            }
        for (int e = 0; e < g.edge_count(); ++e)
            for (int c = 0; c < d.edge_dim; ++c) {
                double v = g.edge_features(e, c);
                if (v != 0.0 && v != 1.0) out.edge[c] = 0;
            }
    }
    return out;
}

/// Input condition after binary-variable rewriting: inequalities on binary
/// coordinates collapse to equalities, which are substituted through the
/// remaining constraints until nothing changes.
struct NormalizedPredicate {
    std::map<int, double> equalities;        // layout coordinate -> 0 or 1
    std::vector<LinearConstraint> residual;  // whatever did not normalize away
    bool contradictory = false;
};

inline NormalizedPredicate normalize_predicate(const LinearPredicate& inps,
                                               const FeatureLayout& layout,
                                               const BinaryColumns& binary) {
    auto is_binary = [&](int coord) {
        if (coord < layout.n_nodes * layout.node_dim) return binary.node[coord % layout.node_dim] != 0;
        int off = coord - layout.n_nodes * layout.node_dim;
        return binary.edge[off % layout.edge_dim] != 0;
    };

    NormalizedPredicate out;
    std::vector<LinearConstraint> work = inps.terms;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<LinearConstraint> rest;
        for (LinearConstraint cons : work) {
            // substitute known equalities
            for (const auto& [coord, val] : out.equalities) {
                if (cons.c[coord] == 0.0) continue;
                cons.d -= cons.c[coord] * val;
                cons.c[coord] = 0.0;
            }
            int nz = -1, n_nz = 0;
            for (size_t j = 0; j < cons.c.size(); ++j)
                if (cons.c[j] != 0.0) {
                    nz = static_cast<int>(j);
                    ++n_nz;
                }
            if (n_nz == 0) {
                bool ok = cons.strict ? 0.0 < cons.d : 0.0 <= cons.d;
                if (!ok) out.contradictory = true;
                changed = true;
                continue;  // trivially true constraints vanish
            }
            if (n_nz == 1 && is_binary(nz)) {
                double bound = cons.d / cons.c[nz];
                bool upper = cons.c[nz] > 0.0;
                std::optional<double> fixed;
                if (upper) {
                    if (bound < 0.0 || (cons.strict && bound <= 0.0)) out.contradictory = true;
                    else if (bound < 1.0 || (cons.strict && bound <= 1.0)) fixed = 0.0;
                } else {
                    if (bound > 1.0 || (cons.strict && bound >= 1.0)) out.contradictory = true;
                    else if (bound > 0.0 || (cons.strict && bound >= 0.0)) fixed = 1.0;
                }
                if (out.contradictory) {
                    changed = true;
                    continue;
                }
                if (fixed) {
                    auto it = out.equalities.find(nz);
                    if (it != out.equalities.end() && it->second != *fixed) out.contradictory = true;
                    out.equalities[nz] = *fixed;
                    changed = true;
                    continue;
                }
                changed = true;  // vacuous on the binary domain
                continue;
            }
            rest.push_back(std::move(cons));
        }
        work = std::move(rest);
    }
    out.residual = std::move(work);
    return out;
}

// ---------------------------------------------------------------------------
// Property file I/O
// ---------------------------------------------------------------------------

namespace detail {

inline void write_config(JsonWriter& w, const PipelineConfig& c) {
    w.begin_object();
    w.key("seed");
    w.value(c.seed);
    w.key("threshold");
    w.value(c.threshold);
    w.key("min_support");
    w.value(c.min_support);
    w.key("top_k");
    w.value(c.top_k);
    w.key("max_structure_nodes");
    w.value(c.max_structure_nodes);
    w.key("match_cap");
    w.value(c.match_cap);
    w.key("tau_s");
    w.value(c.tau_s);
    w.key("unnoticeable");
    w.value(c.unnoticeable);
    w.key("override_rate");
    w.value(c.override_rate);
    w.key("verify_budget");
    w.value(static_cast<long long>(c.verify_budget));
    w.end_object();
}

inline void write_structure(JsonWriter& w, const Structure& s) {
    w.begin_object();
    w.key("n");
    w.value(s.node_count);
    w.key("edges");
    w.begin_array();
    for (const Edge& e : s.edges) {
        w.begin_array();
        w.value(e.src);
        w.value(e.dst);
        w.value(e.etype);
        w.end_array();
    }
    w.end_array();
    w.key("target");
    w.value(s.target);
    w.end_object();
}

inline void write_terms(JsonWriter& w, const std::vector<LinearConstraint>& terms) {
    w.begin_array();
    for (const LinearConstraint& t : terms) {
        w.begin_object();
        w.key("c");
        w.vec(t.c);
        w.key("d");
        w.value(t.d);
        w.key("strict");
        w.value(t.strict);
        w.end_object();
    }
    w.end_array();
}

inline void write_out_condition(JsonWriter& w, const OutputCondition& out) {
    w.begin_object();
    if (out.kind == OutputCondition::ClassIs) {
        w.key("class");
        w.value(out.cls);
    } else {
        w.key("affine");
        w.begin_object();
        w.key("W");
        w.mat(out.W);
        w.key("v");
        w.vec(out.v);
        w.key("tol");
        w.value(out.tol);
        w.end_object();
    }
    w.end_object();
}

inline void write_struct_property(JsonWriter& w, const StructProperty& p) {
    w.begin_object();
    w.key("mode");
    w.value(p.subiso ? "subiso" : "iso");
    w.key("inps");
    write_terms(w, p.inps.terms);
    w.key("out");
    write_out_condition(w, p.out);
    w.key("verified");
    w.value(p.verified);
    w.key("support");
    w.value(static_cast<long long>(p.support_train));
    w.end_object();
}

inline void write_dyn_property(JsonWriter& w, const DynProperty& p) {
    w.begin_object();
    w.key("base");
    write_struct_property(w, p.base);
    w.key("dyna");
    w.begin_array();
    for (const LinearPredicate& conj : p.dyna) write_terms(w, conj.terms);
    w.end_array();
    w.key("out_dyna");
    if (p.out_dyna) {
        w.begin_object();
        w.key("coef");
        w.vec(p.out_dyna->first);
        w.key("intercept");
        w.value(p.out_dyna->second);
        w.end_object();
    } else {
        w.begin_object();
        w.end_object();
    }
    w.key("confidence");
    w.begin_object();
    w.key("defined");
    w.value(p.confidence.defined);
    w.key("support_eval");
    w.value(static_cast<long long>(p.confidence.support_eval));
    w.key("pa_prior");
    w.value(p.confidence.pa_prior);
    w.key("pa_full");
    w.value(p.confidence.pa_full);
    w.key("ir");
    w.value(p.confidence.ir);
    w.key("pe_prior");
    w.value(p.confidence.pe_prior);
    w.key("pe_full");
    w.value(p.confidence.pe_full);
    w.key("rr");
    w.value(p.confidence.rr);
    w.end_object();
    w.end_object();
}

inline std::vector<LinearConstraint> terms_from_json(const nlohmann::json& j) {
    std::vector<LinearConstraint> out;
    for (const auto& tj : j) {
        LinearConstraint t;
        t.c = tj.at("c").get<Vec>();
        t.d = tj.at("d").get<double>();
        t.strict = tj.at("strict").get<bool>();
        out.push_back(std::move(t));
    }
    return out;
}

inline Structure structure_from_json(const nlohmann::json& j) {
    Structure s;
    s.node_count = j.at("n").get<int>();
    for (const auto& ej : j.at("edges"))
        s.edges.push_back({ej.at(0).get<int>(), ej.at(1).get<int>(), ej.at(2).get<int>()});
    s.target = j.at("target").get<int>();
    s.validate();
    return s;
}

inline OutputCondition out_condition_from_json(const nlohmann::json& j, const std::string& objective) {
    OutputCondition out;
    out.objective = objective;
    if (j.contains("class")) {
        out.kind = OutputCondition::ClassIs;
        out.cls = j.at("class").get<int>();
    } else {
        out.kind = OutputCondition::AffineEq;
        const auto& aj = j.at("affine");
        out.v = aj.at("v").get<Vec>();
        out.W = json_to_mat(aj.at("W"), aj.at("W").empty() ? 0 : static_cast<int>(aj.at("W")[0].size()),
                            "property affine W");
        out.tol = aj.at("tol").get<double>();
    }
    return out;
}

inline StructProperty struct_property_from_json(const nlohmann::json& j, const Structure& s,
                                                const std::string& objective) {
    StructProperty p;
    p.structure = s;
    p.objective = objective;
    p.subiso = j.at("mode").get<std::string>() == "subiso";
    p.inps.terms = terms_from_json(j.at("inps"));
    p.out = out_condition_from_json(j.at("out"), objective);
    p.verified = j.at("verified").get<bool>();
    p.support_train = j.at("support").get<long long>();
    return p;
}

}  // namespace detail

inline std::string inference_result_to_json(const InferenceResult& r) {
    JsonWriter w;
    w.begin_object();
    w.key("config");
    detail::write_config(w, r.config);
    w.key("structures");
    w.begin_array();
    for (const MinedStructure& ms : r.structures) {
        w.begin_object();
        w.key("structure");
        detail::write_structure(w, ms.structure);
        w.key("support");
        w.value(static_cast<long long>(ms.support));
        w.end_object();
    }
    w.end_array();
    w.key("properties");
    w.begin_array();
    for (const PropertyRecord& rec : r.records) {
        w.begin_object();
        w.key("structure");
        w.value(rec.structure_idx);
        w.key("objective");
        w.value(rec.objective);
        w.key("iso");
        detail::write_struct_property(w, rec.iso);
        w.key("dyn");
        if (rec.dyn) {
            detail::write_dyn_property(w, *rec.dyn);
        } else {
            w.begin_object();
            w.end_object();
        }
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str() + "\n";
}

inline InferenceResult inference_result_from_json(const nlohmann::json& j) {
    InferenceResult r;
    try {
        const auto& cj = j.at("config");
        r.config.seed = cj.at("seed").get<uint64_t>();
        r.config.threshold = cj.at("threshold").get<double>();
        r.config.min_support = cj.at("min_support").get<double>();
        r.config.top_k = cj.at("top_k").get<int>();
        r.config.max_structure_nodes = cj.at("max_structure_nodes").get<int>();
        r.config.match_cap = cj.at("match_cap").get<int>();
        r.config.tau_s = cj.at("tau_s").get<double>();
        r.config.unnoticeable = cj.at("unnoticeable").get<double>();
        r.config.override_rate = cj.at("override_rate").get<double>();
        r.config.verify_budget = cj.at("verify_budget").get<long long>();
        for (const auto& sj : j.at("structures")) {
            MinedStructure ms;
            ms.structure = detail::structure_from_json(sj.at("structure"));
            ms.support = sj.at("support").get<long long>();
            r.structures.push_back(std::move(ms));
        }
        for (const auto& pj : j.at("properties")) {
            PropertyRecord rec;
            rec.structure_idx = pj.at("structure").get<int>();
            rec.objective = pj.at("objective").get<std::string>();
            const Structure& s = r.structures.at(rec.structure_idx).structure;
            rec.iso = detail::struct_property_from_json(pj.at("iso"), s, rec.objective);
            const auto& dj = pj.at("dyn");
            if (dj.contains("base")) {
                DynProperty dp;
                dp.base = detail::struct_property_from_json(dj.at("base"), s, rec.objective);
                for (const auto& conj : dj.at("dyna"))
                    dp.dyna.push_back({detail::terms_from_json(conj)});
                const auto& oj = dj.at("out_dyna");
                if (oj.contains("coef"))
                    dp.out_dyna = {oj.at("coef").get<Vec>(), oj.at("intercept").get<double>()};
                const auto& confj = dj.at("confidence");
                dp.confidence.defined = confj.at("defined").get<bool>();
                dp.confidence.support_eval = confj.at("support_eval").get<long long>();
                dp.confidence.pa_prior = confj.at("pa_prior").get<double>();
                dp.confidence.pa_full = confj.at("pa_full").get<double>();
                dp.confidence.ir = confj.at("ir").get<double>();
                dp.confidence.pe_prior = confj.at("pe_prior").get<double>();
                dp.confidence.pe_full = confj.at("pe_full").get<double>();
                dp.confidence.rr = confj.at("rr").get<double>();
                rec.dyn = std::move(dp);
            }
            r.records.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("properties schema error: ") + e.what());
    }
    return r;
}

inline void save_inference_result(const InferenceResult& r, const std::string& path) {
    write_file(path, inference_result_to_json(r));
}

inline InferenceResult load_inference_result(const std::string& path) {
    return inference_result_from_json(parse_json(read_file(path), path));
}

// ---------------------------------------------------------------------------
// Text reports
// ---------------------------------------------------------------------------

namespace detail {

inline std::string coord_name(const FeatureLayout& layout, int coord) {
    if (coord < layout.n_nodes * layout.node_dim)
        return "n" + std::to_string(coord / layout.node_dim) + ".x" +
               std::to_string(coord % layout.node_dim);
    int off = coord - layout.n_nodes * layout.node_dim;
    return "e" + std::to_string(off / layout.edge_dim) + ".x" + std::to_string(off % layout.edge_dim);
}

inline std::string render_constraint(const FeatureLayout& layout, const LinearConstraint& t) {
    std::string lhs;
    for (size_t j = 0; j < t.c.size(); ++j) {
        if (t.c[j] == 0.0) continue;
        std::string coef = format_double(std::fabs(t.c[j]));
        std::string term = (coef == "1" ? "" : coef + "*") + coord_name(layout, static_cast<int>(j));
        if (lhs.empty()) lhs = (t.c[j] < 0 ? "-" : "") + term;
        else lhs += (t.c[j] < 0 ? " - " : " + ") + term;
    }
    if (lhs.empty()) lhs = "0";
    return lhs + (t.strict ? " < " : " <= ") + format_double(t.d);
}

inline std::string render_predicate(const FeatureLayout& layout, const LinearPredicate& p,
                                    const BinaryColumns* binary) {
    if (p.terms.empty()) return "true";
    std::string s;
    if (binary) {
        NormalizedPredicate norm = normalize_predicate(p, layout, *binary);
        if (norm.contradictory) return "false";
        for (const auto& [coord, val] : norm.equalities) {
            if (!s.empty()) s += " && ";
            s += coord_name(layout, coord) + " = " + format_double(val);
        }
        for (const LinearConstraint& t : norm.residual) {
            if (!s.empty()) s += " && ";
            s += render_constraint(layout, t);
        }
        if (s.empty()) return "true";
        return s;
    }
    for (const LinearConstraint& t : p.terms) {
        if (!s.empty()) s += " && ";
        s += render_constraint(layout, t);
    }
    return s;
}

}  // namespace detail

/// Human-readable property table; pass the dataset to enable binary-feature
/// normalization of the rendered conditions.
inline std::string render_report(const InferenceResult& r, const Gnn& model,
                                 const Dataset* data = nullptr) {
    std::optional<BinaryColumns> binary;
    if (data) binary = binary_columns(*data);
    std::string out;
    out += "structures: " + std::to_string(r.structures.size()) + "\n";
    for (size_t si = 0; si < r.structures.size(); ++si) {
        const MinedStructure& ms = r.structures[si];
        out += "  S" + std::to_string(si) + ": nodes=" + std::to_string(ms.structure.node_count) +
               " target=" + std::to_string(ms.structure.target) + " edges=[";
        for (size_t e = 0; e < ms.structure.edges.size(); ++e) {
            const Edge& ed = ms.structure.edges[e];
            out += (e ? " " : "") + std::to_string(ed.src) + "->" + std::to_string(ed.dst) + ":" +
                   std::to_string(ed.etype);
        }
        out += "] support=" + std::to_string(ms.support) + "\n";
    }
    out += "properties: " + std::to_string(r.records.size()) + "\n";
    char buf[256];
    for (size_t pi = 0; pi < r.records.size(); ++pi) {
        const PropertyRecord& rec = r.records[pi];
        FeatureLayout layout(rec.iso.structure, model.node_dim, model.edge_dim);
        std::string cond =
            detail::render_predicate(layout, rec.iso.inps, binary ? &*binary : nullptr);
        std::string outcond;
        if (rec.iso.out.kind == OutputCondition::ClassIs)
            outcond = "class=" + std::to_string(rec.iso.out.cls);
        else
            outcond = "affine(tol=" + format_double(rec.iso.out.tol) + ")";
        std::snprintf(buf, sizeof(buf), "  P%zu S%d %s [%s] %s => %s support=%ld\n", pi,
                      rec.structure_idx, rec.objective.c_str(), rec.iso.verified ? "verified" : "unverified",
                      cond.c_str(), outcond.c_str(), rec.iso.support_train);
        out += buf;
        if (rec.dyn) {
            const ConfidenceReport& c = rec.dyn->confidence;
            const Objective& obj = model.objectives.at(rec.objective);
            if (obj.kind == TaskKind::Classification)
                std::snprintf(buf, sizeof(buf),
                              "      subiso: PA_prior=%.4f PA_full=%.4f IR=%.4f support_eval=%ld%s\n",
                              c.pa_prior, c.pa_full, c.ir, c.support_eval,
                              c.defined ? "" : " (undefined)");
            else
                std::snprintf(buf, sizeof(buf),
                              "      subiso: PE_prior=%.3e PE_full=%.3e RR=%.4f support_eval=%ld%s\n",
                              c.pe_prior, c.pe_full, c.rr, c.support_eval,
                              c.defined ? "" : " (undefined)");
            out += buf;
            if (rec.dyn->has_dyna()) {
                out += "      dyna: " + std::to_string(rec.dyn->dyna.size()) + " path(s)\n";
            }
            if (rec.dyn->out_dyna) out += "      out_dyna: fitted linear deviation term\n";
        }
    }
    return out;
}

inline std::string render_defense_table(const std::string& header, const DefenseReport& rep) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-12s ACC=%.4f ASR=%.4f D-ACC=%.4f D-ASR=%.4f pruned=%ld\n",
                  header.c_str(), rep.acc, rep.asr, rep.d_acc, rep.d_asr, rep.pruned_edge_count);
    return buf;
}

}  // namespace gnnprop
