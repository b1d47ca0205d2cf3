#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace qbsde {

/// Terminal condition xi = h(B_T) for the one-dimensional pipeline.
/// lipschitz / sup_norm are declared bounds when known; empirical grid or
/// path maxima are used where they are not.
struct TerminalCondition {
    std::string label;
    std::function<double(double)> h;
    std::optional<double> lipschitz;
    std::optional<double> sup_norm;
};

/// Registry labels: "identity", "square", "tanh", "tanh:scale=4".
inline TerminalCondition make_terminal(const std::string& text) {
    const std::size_t colon = text.find(':');
    const std::string name = text.substr(0, colon);
    std::map<std::string, double> params;
    if (colon != std::string::npos) {
        const std::string rest = text.substr(colon + 1);
        const std::size_t eq = rest.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("terminal spec: expected key=value in '" + text + "'");
        try {
            params[rest.substr(0, eq)] = std::stod(rest.substr(eq + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("terminal spec: bad numeric value in '" + text + "'");
        }
    }

    TerminalCondition tc;
    tc.label = text;
    if (name == "identity") {
        tc.h = [](double x) { return x; };
        tc.lipschitz = 1.0;
    } else if (name == "square") {
        tc.h = [](double x) { return x * x; };
    } else if (name == "tanh") {
        double scale = 1.0;
        if (auto it = params.find("scale"); it != params.end()) {
            scale = it->second;
            params.erase(it);
        }
        tc.h = [scale](double x) { return std::tanh(scale * x); };
        tc.lipschitz = std::abs(scale);
        tc.sup_norm = 1.0;
    } else {
        throw std::invalid_argument("unknown terminal condition: '" + name + "'");
    }
    if (!params.empty())
        throw std::invalid_argument("terminal '" + name + "': unknown parameter '" +
                                    params.begin()->first + "'");
    return tc;
}

} // namespace qbsde
