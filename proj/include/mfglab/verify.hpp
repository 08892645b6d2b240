#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace mfg {

// One checked invariant with its measured margin. "observed" is the value the
// check measured (a residual, a worst-case sweep value, a slope gap);
// "tolerance" is the bound it must stay under; margin = tolerance - observed.
struct VerifyRow {
    std::string name;
    bool pass = false;
    double observed = 0.0;
    double tolerance = 0.0;
    double margin = 0.0;
    std::string detail;
};

struct VerifySuite {
    std::vector<VerifyRow> rows;
    bool all_pass() const;
};

// Desk-scale sweep over the library's internal invariants: kernel pins and
// quadrature cross-checks, the integral-kernel sign, the frequency-split
// determinant sweep, the discrete duality identity, mass conservation of a
// forward solve, and a probe-ladder slope. Deterministic for a fixed seed.
VerifySuite run_verification(unsigned long long seed = 1);

nlohmann::json verify_to_json(const VerifySuite& suite);
void write_verify_csv(std::ostream& out, const VerifySuite& suite);

}  // namespace mfg
