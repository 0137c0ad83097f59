#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tomo/io.hpp"
#include "tomo/pipeline.hpp"
#include "tomo/simulate.hpp"

namespace tomo {

enum class ValueType { text, integer, real, boolean, real_list, int_list };

struct ConfigKey {
    std::string name;
    ValueType type;
    std::string default_value;
    /// "auto" is accepted in place of a typed value.
    bool allows_auto;
    std::string help;
};

/// Every key the run configuration understands, in a fixed order.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value run configuration. Unknown keys and ill-typed values are
/// rejected at set() time.
class RunConfig {
public:
    RunConfig();

    void set(const std::string& key, const std::string& value);
    void merge(const KeyValues& kv);
    void merge_file(const std::filesystem::path& path);

    const std::string& get(const std::string& key) const;
    bool is_auto(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_reals(const std::string& key) const;
    std::vector<int> get_ints(const std::string& key) const;
    std::optional<double> get_optional_real(const std::string& key) const;
    std::optional<int> get_optional_int(const std::string& key) const;

    const KeyValues& values() const { return values_; }

    /// Replaces experiment-dependent "auto" values (angles, outer_iters,
    /// fidelity) with their resolved form.
    RunConfig resolved() const;

    Experiment experiment() const;
    CtSimSpec ct_spec() const;
    EtSimSpec et_spec() const;
    SolverConfig solver() const;
    MethodSpec method() const;
    ProtocolConfig protocol(int available_realizations) const;

    /// key=value text; parses back to an identical configuration.
    std::string provenance() const;

private:
    KeyValues values_;
};

double parse_real(const std::string& s, const std::string& key);
long long parse_integer(const std::string& s, const std::string& key);
bool parse_bool(const std::string& s, const std::string& key);

} // namespace tomo
