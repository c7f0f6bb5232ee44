#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gnnprop/fnn.hpp"
#include "gnnprop/gnn.hpp"
#include "gnnprop/graph.hpp"

namespace gnnprop {

/// Canonical decimal rendering: 17 significant digits round-trip doubles
/// bit-exactly, integers print without a trailing ".0".
inline std::string format_double(double x) {
    if (x == static_cast<long long>(x) && std::fabs(x) < 1e15)
        return std::to_string(static_cast<long long>(x));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Minimal canonical JSON emitter: fixed key order is whatever the caller
/// writes, no whitespace, floats via format_double. nlohmann is used for
/// parsing only, so serialized bytes stay reproducible.
class JsonWriter {
public:
    std::string str() const { return out_.str(); }

    void begin_object() { sep(); out_ << '{'; stack_.push_back(kFirst); }
    void end_object() { out_ << '}'; stack_.pop_back(); mark_value(); }
    void begin_array() { sep(); out_ << '['; stack_.push_back(kFirst); }
    void end_array() { out_ << ']'; stack_.pop_back(); mark_value(); }

    void key(const std::string& k) {
        sep();
        write_string(k);
        out_ << ':';
        stack_.push_back(kKey);
    }

    void value(double v) { sep(); out_ << format_double(v); mark_value(); }
    void value(int v) { sep(); out_ << v; mark_value(); }
    void value(long long v) { sep(); out_ << v; mark_value(); }
    void value(uint64_t v) { sep(); out_ << v; mark_value(); }
    void value(bool v) { sep(); out_ << (v ? "true" : "false"); mark_value(); }
    void value(const std::string& v) { sep(); write_string(v); mark_value(); }
    void value(const char* v) { value(std::string(v)); }

    void vec(const Vec& v) {
        begin_array();
        for (double x : v) value(x);
        end_array();
    }

    void int_vec(const std::vector<int>& v) {
        begin_array();
        for (int x : v) value(x);
        end_array();
    }

    void mat(const Mat& m) {
        begin_array();
        for (int r = 0; r < m.rows; ++r) vec(m.row(r));
        end_array();
    }

private:
    enum State { kFirst, kNext, kKey };

    void sep() {
        if (stack_.empty()) return;
        if (stack_.back() == kNext) out_ << ',';
        else if (stack_.back() == kKey) stack_.pop_back();
    }
    void mark_value() {
        if (!stack_.empty()) stack_.back() = kNext;
    }
    void write_string(const std::string& s) {
        out_ << '"';
        for (char ch : s) {
            switch (ch) {
                case '"': out_ << "\\\""; break;
                case '\\': out_ << "\\\\"; break;
                case '\n': out_ << "\\n"; break;
                case '\t': out_ << "\\t"; break;
                default: out_ << ch;
            }
        }
        out_ << '"';
    }

    std::ostringstream out_;
    std::vector<State> stack_;
};

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path);
    f << contents;
    if (!f) throw Error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("malformed JSON in " + what);
    return j;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

inline std::string dataset_to_json(const Dataset& d) {
    JsonWriter w;
    w.begin_object();
    w.key("feature_dims");
    w.begin_array();
    w.value(d.node_dim);
    w.value(d.edge_dim);
    w.end_array();
    w.key("objectives");
    w.begin_array();
    for (const auto& obj : d.objectives) {
        w.begin_object();
        w.key("name");
        w.value(obj.name);
        w.key("kind");
        w.value(to_string(obj.kind));
        w.end_object();
    }
    w.end_array();
    w.key("graphs");
    w.begin_array();
    for (const Graph& g : d.graphs) {
        Graph canon = g;  // canonical serialization: sorted edges
        sort_edges(canon.edges, canon.edge_features);
        w.begin_object();
        w.key("n");
        w.value(canon.node_count);
        w.key("x");
        w.mat(canon.node_features);
        w.key("edges");
        w.begin_array();
        for (const Edge& e : canon.edges) {
            w.begin_array();
            w.value(e.src);
            w.value(e.dst);
            w.value(e.etype);
            w.end_array();
        }
        w.end_array();
        w.key("e");
        w.mat(canon.edge_features);
        w.key("labels");
        w.begin_object();
        std::map<std::string, bool> written;
        for (const auto& obj : d.objectives) {
            auto it = canon.node_labels.find(obj.name);
            if (it == canon.node_labels.end()) continue;
            written[obj.name] = true;
            w.key(obj.name);
            if (obj.kind == TaskKind::Classification) {
                w.begin_array();
                for (double v : it->second) w.value(static_cast<long long>(v));
                w.end_array();
            } else {
                w.vec(it->second);
            }
        }
        for (const auto& [name, labels] : canon.node_labels) {
            if (written.count(name)) continue;
            w.key(name);
            w.vec(labels);
        }
        w.end_object();
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str() + "\n";
}

inline void save_dataset(const Dataset& d, const std::string& path) {
    d.validate();
    write_file(path, dataset_to_json(d));
}

inline Mat json_to_mat(const nlohmann::json& j, int expect_cols, const std::string& where) {
    Mat m(static_cast<int>(j.size()), expect_cols);
    for (size_t r = 0; r < j.size(); ++r) {
        if (static_cast<int>(j[r].size()) != expect_cols)
            throw ValidationError(where + ": row " + std::to_string(r) + " width mismatch");
        for (int c = 0; c < expect_cols; ++c) m(static_cast<int>(r), c) = j[r][c].get<double>();
    }
    return m;
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
    Dataset d;
    try {
        d.node_dim = j.at("feature_dims").at(0).get<int>();
        d.edge_dim = j.at("feature_dims").at(1).get<int>();
        for (const auto& o : j.at("objectives")) {
            ObjectiveDecl decl;
            decl.name = o.at("name").get<std::string>();
            std::string kind = o.at("kind").get<std::string>();
            if (kind == "classification") decl.kind = TaskKind::Classification;
            else if (kind == "regression") decl.kind = TaskKind::Regression;
            else throw ValidationError("unknown objective kind: " + kind);
            d.objectives.push_back(decl);
        }
        int gi = 0;
        for (const auto& gj : j.at("graphs")) {
            const std::string where = "graph " + std::to_string(gi++);
            Graph g;
            g.node_count = gj.at("n").get<int>();
            g.node_features = json_to_mat(gj.at("x"), d.node_dim, where + " x");
            for (const auto& ej : gj.at("edges"))
                g.edges.push_back({ej.at(0).get<int>(), ej.at(1).get<int>(), ej.at(2).get<int>()});
            g.edge_features = json_to_mat(gj.at("e"), d.edge_dim, where + " e");
            if (gj.contains("labels"))
                for (const auto& [name, arr] : gj.at("labels").items())
                    g.node_labels[name] = arr.get<Vec>();
            d.graphs.push_back(std::move(g));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("dataset schema error: ") + e.what());
    }
    d.validate();
    return d;
}

inline Dataset load_dataset(const std::string& path) {
    return dataset_from_json(parse_json(read_file(path), path));
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

inline void write_fnn(JsonWriter& w, const Fnn& f) {
    w.begin_object();
    w.key("input_dim");
    w.value(f.input_dim);
    w.key("output_dim");
    w.value(f.output_dim);
    w.key("layers");
    w.begin_array();
    for (const Layer& l : f.layers) {
        w.begin_object();
        if (auto* a = std::get_if<AffineLayer>(&l)) {
            w.key("affine");
            w.begin_object();
            w.key("A");
            w.mat(a->A);
            w.key("b");
            w.vec(a->b);
            w.end_object();
        } else if (auto* r = std::get_if<ReluLayer>(&l)) {
            w.key("relu");
            w.begin_object();
            w.key("width");
            w.value(r->width);
            w.end_object();
        } else {
            const auto& m = std::get<MaxPoolLayer>(l);
            w.key("maxpool");
            w.begin_object();
            w.key("input_width");
            w.value(m.input_width);
            w.key("partitions");
            w.begin_array();
            for (const auto& p : m.partitions) w.int_vec(p);
            w.end_array();
            w.end_object();
        }
        w.end_object();
    }
    w.end_array();
    w.end_object();
}

inline Fnn fnn_from_json(const nlohmann::json& j) {
    Fnn f;
    f.input_dim = j.at("input_dim").get<int>();
    f.output_dim = j.at("output_dim").get<int>();
    for (const auto& lj : j.at("layers")) {
        if (lj.contains("affine")) {
            const auto& aj = lj.at("affine");
            Vec b = aj.at("b").get<Vec>();
            Mat A = json_to_mat(aj.at("A"), aj.at("A").empty() ? 0 : static_cast<int>(aj.at("A")[0].size()),
                                "affine A");
            f.layers.push_back(AffineLayer{std::move(A), std::move(b)});
        } else if (lj.contains("relu")) {
            f.layers.push_back(ReluLayer{lj.at("relu").at("width").get<int>()});
        } else if (lj.contains("maxpool")) {
            MaxPoolLayer m;
            m.input_width = lj.at("maxpool").at("input_width").get<int>();
            for (const auto& p : lj.at("maxpool").at("partitions"))
                m.partitions.push_back(p.get<std::vector<int>>());
            f.layers.push_back(std::move(m));
        } else {
            throw ParseError("unknown layer kind in model");
        }
    }
    f.validate();
    return f;
}

inline std::string gnn_to_json(const Gnn& m) {
    JsonWriter w;
    w.begin_object();
    w.key("node_dim");
    w.value(m.node_dim);
    w.key("edge_dim");
    w.value(m.edge_dim);
    w.key("layers");
    w.begin_array();
    for (const GnnLayer& l : m.layers) {
        w.begin_object();
        w.key("msg");
        w.begin_object();
        for (size_t t = 0; t < l.msg.size(); ++t) {
            w.key(std::to_string(t));
            write_fnn(w, l.msg[t]);
        }
        w.end_object();
        w.key("agg");
        w.value(to_string(l.agg));
        w.key("upd");
        write_fnn(w, l.upd);
        w.key("self_loop");
        w.value(l.self_loop);
        w.end_object();
    }
    w.end_array();
    w.key("objectives");
    w.begin_object();
    for (const auto& [name, obj] : m.objectives) {
        w.key(name);
        w.begin_object();
        w.key("slice");
        w.begin_array();
        w.value(obj.lo);
        w.value(obj.hi);
        w.end_array();
        w.key("kind");
        w.value(to_string(obj.kind));
        w.end_object();
    }
    w.end_object();
    w.end_object();
    return w.str() + "\n";
}

inline void save_gnn(const Gnn& m, const std::string& path) {
    m.validate();
    write_file(path, gnn_to_json(m));
}

inline Gnn gnn_from_json(const nlohmann::json& j) {
    Gnn m;
    try {
        m.node_dim = j.at("node_dim").get<int>();
        m.edge_dim = j.at("edge_dim").get<int>();
        for (const auto& lj : j.at("layers")) {
            GnnLayer l;
            const auto& msg = lj.at("msg");
            l.msg.resize(msg.size());
            for (const auto& [key, fj] : msg.items()) {
                size_t t = std::stoul(key);
                if (t >= l.msg.size()) throw ValidationError("non-contiguous etype keys in msg");
                l.msg[t] = fnn_from_json(fj);
            }
            std::string agg = lj.at("agg").get<std::string>();
            if (agg == "sum") l.agg = Agg::Sum;
            else if (agg == "mean") l.agg = Agg::Mean;
            else if (agg == "max") l.agg = Agg::Max;
            else throw ValidationError("unknown agg: " + agg);
            l.upd = fnn_from_json(lj.at("upd"));
            l.self_loop = lj.at("self_loop").get<bool>();
            m.layers.push_back(std::move(l));
        }
        for (const auto& [name, oj] : j.at("objectives").items()) {
            Objective obj;
            obj.lo = oj.at("slice").at(0).get<int>();
            obj.hi = oj.at("slice").at(1).get<int>();
            std::string kind = oj.at("kind").get<std::string>();
            obj.kind = kind == "regression" ? TaskKind::Regression : TaskKind::Classification;
            m.objectives[name] = obj;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model schema error: ") + e.what());
    }
    m.validate();
    return m;
}

inline Gnn load_gnn(const std::string& path) {
    return gnn_from_json(parse_json(read_file(path), path));
}

}  // namespace gnnprop
