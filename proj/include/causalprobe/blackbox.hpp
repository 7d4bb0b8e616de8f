#pragma once

#include <csignal>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "causalprobe/core.hpp"

namespace causalprobe {

enum class Activation { relu, tanh_fn, sigmoid, identity };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh_fn: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity") return Activation::identity;
    throw IoError("unknown activation: " + s);
}

enum class OutputKind { scalar, class_probability };

struct MlpLayer {
    MatrixXd weights;  // rows = output units, cols = input units
    VectorXd bias;
    Activation activation = Activation::identity;
};

/// Feed-forward network description. Stands in for whatever trained network
/// is being interpreted; the last layer must produce a single output.
struct MlpSpec {
    std::vector<MlpLayer> layers;
    OutputKind output = OutputKind::scalar;

    Eigen::Index input_arity() const {
        if (layers.empty()) throw InvalidInputError("MLP has no layers");
        return layers.front().weights.cols();
    }

    void validate() const {
        if (layers.empty()) throw InvalidInputError("MLP has no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& L = layers[l];
            if (L.weights.rows() != L.bias.size())
                throw InvalidInputError("MLP layer " + std::to_string(l) + ": bias length mismatch");
            if (l > 0 && layers[l - 1].weights.rows() != L.weights.cols())
                throw InvalidInputError("MLP layer " + std::to_string(l) +
                                        ": input width does not chain from previous layer");
        }
        if (layers.back().weights.rows() != 1)
            throw InvalidInputError("MLP must end in a single output unit");
    }
};

namespace detail {

inline double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh_fn: return std::tanh(x);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::identity: return x;
    }
    return x;
}

}  // namespace detail

/// Batch forward pass: one output per input row.
inline VectorXd mlp_forward(const MlpSpec& spec, const MatrixXd& inputs) {
    spec.validate();
    if (inputs.cols() != spec.input_arity())
        throw InvalidInputError("input has " + std::to_string(inputs.cols()) +
                                " columns, MLP expects " + std::to_string(spec.input_arity()));
    MatrixXd h = inputs;
    for (const auto& layer : spec.layers) {
        MatrixXd z = (h * layer.weights.transpose()).rowwise() + layer.bias.transpose();
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            for (Eigen::Index j = 0; j < z.cols(); ++j)
                z(i, j) = detail::apply_activation(layer.activation, z(i, j));
        h = std::move(z);
    }
    return h.col(0);
}

inline MlpSpec mlp_from_json(const nlohmann::json& j) {
    MlpSpec spec;
    if (!j.contains("layers") || !j["layers"].is_array())
        throw IoError("MLP spec: missing 'layers' array");
    for (const auto& jl : j["layers"]) {
        MlpLayer layer;
        const auto& jw = jl.at("weights");
        const auto rows = jw.size();
        if (rows == 0) throw IoError("MLP spec: empty weight matrix");
        const auto cols = jw[0].size();
        layer.weights.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows; ++r) {
            if (jw[r].size() != cols) throw IoError("MLP spec: ragged weight matrix");
            for (std::size_t c = 0; c < cols; ++c)
                layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    jw[r][c].get<double>();
        }
        const auto& jb = jl.at("bias");
        layer.bias.resize(static_cast<Eigen::Index>(jb.size()));
        for (std::size_t r = 0; r < jb.size(); ++r)
            layer.bias(static_cast<Eigen::Index>(r)) = jb[r].get<double>();
        layer.activation = activation_from_name(jl.value("activation", "identity"));
        spec.layers.push_back(std::move(layer));
    }
    const std::string out = j.value("output", "scalar");
    if (out == "scalar") spec.output = OutputKind::scalar;
    else if (out == "class_probability") spec.output = OutputKind::class_probability;
    else throw IoError("MLP spec: unknown output kind '" + out + "'");
    spec.validate();
    return spec;
}

inline nlohmann::json mlp_to_json(const MlpSpec& spec) {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : spec.layers) {
        nlohmann::json jl;
        auto w = nlohmann::json::array();
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            auto row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) row.push_back(layer.weights(r, c));
            w.push_back(std::move(row));
        }
        jl["weights"] = std::move(w);
        auto b = nlohmann::json::array();
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) b.push_back(layer.bias(r));
        jl["bias"] = std::move(b);
        jl["activation"] = activation_name(layer.activation);
        j["layers"].push_back(std::move(jl));
    }
    j["output"] = spec.output == OutputKind::scalar ? "scalar" : "class_probability";
    return j;
}

inline MlpSpec load_mlp_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad MLP spec " + path + ": " + e.what());
    }
    return mlp_from_json(j);
}

/// Probes an external model over a line-delimited JSON protocol:
/// request {"x":[...]}\n on the child's stdin, response {"y":<number>}\n on
/// its stdout, one pair per input row, flushed after each request.
inline VectorXd subprocess_probe(const std::string& command, const MatrixXd& inputs,
                                 double timeout_seconds = 30.0) {
    static const bool sigpipe_ignored = [] {
        std::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)sigpipe_ignored;

    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw ProbeError("pipe() failed");
    const pid_t pid = fork();
    if (pid < 0) throw ProbeError("fork() failed");
    if (pid == 0) {
        setpgid(0, 0);  // own process group, so cleanup reaches the whole tree
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]); close(to_child[1]);
        close(from_child[0]); close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid);  // both sides set it; whichever runs first wins
    close(to_child[0]);
    close(from_child[1]);
    const int wfd = to_child[1];
    const int rfd = from_child[0];

    auto fail = [&](const std::string& msg) -> ProbeError {
        close(wfd); close(rfd);
        kill(-pid, SIGKILL);  // the shell may fork rather than exec; kill the group
        int status = 0;
        waitpid(pid, &status, 0);
        return ProbeError("probe '" + command + "': " + msg);
    };

    VectorXd out(inputs.rows());
    std::string pending;  // bytes read but not yet consumed as a line
    const long timeout_ms = static_cast<long>(timeout_seconds * 1000.0);
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        nlohmann::json req;
        auto xs = nlohmann::json::array();
        for (Eigen::Index j = 0; j < inputs.cols(); ++j) xs.push_back(inputs(i, j));
        req["x"] = std::move(xs);
        std::string line = req.dump();
        line.push_back('\n');
        std::size_t written = 0;
        while (written < line.size()) {
            const ssize_t k = write(wfd, line.data() + written, line.size() - written);
            if (k <= 0) throw fail("write failed (process exited?)");
            written += static_cast<std::size_t>(k);
        }
        // read one response line
        std::string resp;
        for (;;) {
            const auto nl = pending.find('\n');
            if (nl != std::string::npos) {
                resp = pending.substr(0, nl);
                pending.erase(0, nl + 1);
                break;
            }
            struct pollfd pfd{rfd, POLLIN, 0};
            const int pr = poll(&pfd, 1, static_cast<int>(timeout_ms));
            if (pr == 0) throw fail("timeout waiting for response");
            if (pr < 0) throw fail("poll failed");
            char buf[4096];
            const ssize_t k = read(rfd, buf, sizeof(buf));
            if (k <= 0) throw fail("process closed its output mid-probe");
            pending.append(buf, static_cast<std::size_t>(k));
        }
        try {
            const auto j = nlohmann::json::parse(resp);
            if (!j.contains("y") || !j["y"].is_number())
                throw fail("malformed response (no numeric 'y'): " + resp);
            out(i) = j["y"].get<double>();
        } catch (const nlohmann::json::exception&) {
            throw fail("malformed response (not JSON): " + resp);
        }
        if (!std::isfinite(out(i))) throw fail("non-finite model output");
    }
    close(wfd);
    close(rfd);
    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw ProbeError("probe '" + command + "': nonzero exit status");
    return out;
}

/// Opaque predict-batch interface over a black-box model. Instances of the
/// mlp and table kinds are immutable and shareable; a subprocess handle owns
/// its command string and must not be probed from two threads at once.
class ModelHandle {
  public:
    static ModelHandle mlp(MlpSpec spec, bool hard_labels = false) {
        spec.validate();
        ModelHandle h;
        h.impl_ = Mlp{std::move(spec), hard_labels};
        return h;
    }

    /// Pre-probed outputs: predict() echoes them back (row-aligned). Used when
    /// probing happened elsewhere and only the observational table is at hand.
    static ModelHandle table(VectorXd outputs, Eigen::Index arity) {
        ModelHandle h;
        h.impl_ = Table{std::move(outputs), arity};
        return h;
    }

    static ModelHandle command(std::string cmd, double timeout_seconds = 30.0) {
        ModelHandle h;
        h.impl_ = Command{std::move(cmd), timeout_seconds};
        return h;
    }

    VectorXd predict(const MatrixXd& inputs) const {
        if (const auto* m = std::get_if<Mlp>(&impl_)) {
            VectorXd y = mlp_forward(m->spec, inputs);
            if (!y.allFinite()) throw ProbeError("model produced non-finite output");
            if (m->spec.output == OutputKind::class_probability) {
                if ((y.array() < 0.0).any() || (y.array() > 1.0).any())
                    throw ProbeError("class_probability model produced values outside [0,1]");
                if (m->hard_labels)
                    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = y(i) >= 0.5 ? 1.0 : 0.0;
            }
            return y;
        }
        if (const auto* t = std::get_if<Table>(&impl_)) {
            if (t->arity >= 0 && inputs.cols() != t->arity)
                throw InvalidInputError("table model: input arity mismatch");
            if (inputs.rows() != t->outputs.size())
                throw InvalidInputError("table model holds " + std::to_string(t->outputs.size()) +
                                        " outputs but got " + std::to_string(inputs.rows()) + " rows");
            return t->outputs;
        }
        const auto& c = std::get<Command>(impl_);
        VectorXd y = subprocess_probe(c.cmd, inputs, c.timeout_seconds);
        if (!y.allFinite()) throw ProbeError("model produced non-finite output");
        return y;
    }

  private:
    struct Mlp {
        MlpSpec spec;
        bool hard_labels;
    };
    struct Table {
        VectorXd outputs;
        Eigen::Index arity;  // -1 = unchecked
    };
    struct Command {
        std::string cmd;
        double timeout_seconds;
    };
    std::variant<Mlp, Table, Command> impl_;

    ModelHandle() = default;
};

inline VectorXd predict_batch(const ModelHandle& model, const MatrixXd& inputs) {
    return model.predict(inputs);
}

/// Builds the observational table {X_i, Y_i} by probing the model on the
/// supplied inputs. Row i of the result pairs inputs.row(i) with its output.
inline Dataset build_observational_table(const ModelHandle& model, const MatrixXd& inputs,
                                         std::vector<FeatureSpec> specs) {
    if (inputs.rows() < 2) throw InvalidInputError("need at least 2 probe rows");
    VectorXd y = predict_batch(model, inputs);
    return Dataset(inputs, std::move(specs), std::move(y));
}

}  // namespace causalprobe
