// Tiny model stand-in for the subprocess-probe tests. Speaks the line-
// delimited JSON protocol: request {"x":[...]}, response {"y":<number>}.
// Modes: echo-x1 (y = x1), affine (y = 2*x1 + 1), garbage (non-JSON reply),
// fail (exit nonzero immediately), slow (never answers).

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "echo-x1";
    if (mode == "fail") return 3;
    std::string line;
    while (std::getline(std::cin, line)) {
        if (mode == "slow") {
            std::this_thread::sleep_for(std::chrono::seconds(60));
            return 0;
        }
        if (mode == "garbage") {
            std::cout << "not json at all\n" << std::flush;
            continue;
        }
        const auto req = nlohmann::json::parse(line);
        const double x1 = req.at("x").at(0).get<double>();
        nlohmann::json resp;
        resp["y"] = mode == "affine" ? 2.0 * x1 + 1.0 : x1;
        std::cout << resp.dump() << "\n" << std::flush;
    }
    return 0;
}
