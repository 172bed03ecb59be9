#include "levytree/lab.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace levytree::lab {

namespace {

using T = KeyType;

const std::vector<KeySpec> kSchema = {
    {"experiment.name", T::text, "", "experiment to run (see list-experiments)"},
    {"experiment.output_dir", T::text, "levytree-out", "root directory for artifacts"},
    {"experiment.threads", T::integer, "1", "worker threads for replicates"},

    {"mechanism.kind", T::text, "stable", "stable | null | atoms | counterexample"},
    {"mechanism.gamma", T::real, "2", "stable index or counterexample index in (1, 2]"},
    {"mechanism.alpha", T::real, "0", "drift (null and atoms)"},
    {"mechanism.beta", T::real, "0", "Brownian coefficient (null and atoms)"},
    {"mechanism.n_max", T::integer, "40", "last atom index of the counterexample"},
    {"mechanism.atoms", T::text, "", "atom list 'r:a;r:a;...' with decreasing positions"},
    {"mechanism.label", T::text, "", "free-form label"},

    {"seeds.list", T::int_list, "", "root seeds, one stream family per seed"},

    {"grid.points", T::integer, "60", "points of the lambda grid"},
    {"grid.log10_lo", T::real, "-3", "log10 of the smallest lambda"},
    {"grid.log10_hi", T::real, "6", "log10 of the largest lambda"},

    {"exponents.points", T::integer, "4000", "points of the exponent scan grid"},
    {"exponents.floor_q", T::real, "1e-3", "pair floor Q of the delta estimator"},
    {"exponents.c_step", T::real, "0.01", "c-grid step of the delta estimator"},

    {"doubling.k_lo", T::integer, "20", "smallest dyadic exponent k of r = 2^-k"},
    {"doubling.k_hi", T::integer, "80", "largest dyadic exponent k of r = 2^-k"},
    {"doubling.band_lo", T::real, "0", "lower bound of the accepted ratio band (0 disables)"},
    {"doubling.band_hi", T::real, "0", "upper bound of the accepted ratio band (0 disables)"},

    {"counterexample.n_lo", T::integer, "3", "first index n of the scale sequence r_n"},
    {"counterexample.ratio_threshold", T::real, "10", "doubling failure threshold"},

    {"kernels.gammas", T::real_list, "1.2,1.5,2", "stable indices of the identity checks"},
    {"kernels.r", T::real_list, "0.01,0.1,1", "radii of the integral identity"},
    {"kernels.lambda", T::real_list, "0.5,1,10", "lambdas of the integral identity"},
    {"kernels.a", T::real_list, "0.1,1,3", "levels a of the kappa checks"},
    {"kernels.rtol", T::real, "1e-8", "closed-form tolerance"},
    {"kernels.identity_rtol", T::real, "1e-6", "integral identity and route tolerance"},
    {"kernels.controlvg_rtol", T::real, "1e-6", "constancy tolerance of v(r)/(r phi^-1(1/r))"},
    {"kernels.density_r", T::real_list, "1e-4,1e-5,1e-6,1e-7,1e-8", "radii of the density bound"},
    {"kernels.density_gammas", T::real_list, "1.5,2", "stable indices of the density bound"},

    {"spine.r", T::real_list, "0.5,1", "radii r"},
    {"spine.lambda", T::real_list, "0.5,1,2", "Laplace arguments"},
    {"spine.replicates", T::integer, "10000", "Monte Carlo replicates"},
    {"spine.p", T::integer, "1000000", "decoration scale"},
    {"spine.sigmas", T::real, "3", "accepted deviation in standard errors"},

    {"subordinator.nmax", T::integer, "30", "finest dyadic level of the path"},
    {"subordinator.k_lo", T::integer, "5", "window top r = 2^-k_lo"},
    {"subordinator.k_hi", T::integer, "30", "window bottom r = 2^-k_hi"},
    {"subordinator.max_over_min", T::real, "5", "accepted cross-seed spread"},
    {"subordinator.laplace_replicates", T::integer, "10000", "draws of S_1 for the Laplace check"},
    {"subordinator.sigmas", T::real, "3", "accepted deviation in standard errors"},

    {"walk.length", T::integer, "1048576", "minimum number of vertices of a tree"},
    {"walk.p", T::integer, "1048576", "time scale, dt = 1/p"},
    {"walk.max_factor", T::integer, "4", "maximum length as a multiple of walk.length"},

    {"density.centers_per_tree", T::integer, "10", "mass-uniform centers per tree"},
    {"density.k_lo", T::integer, "4", "window top r = 2^-k_lo"},
    {"density.k_hi", T::integer, "12", "window bottom r = 2^-k_hi"},
    {"density.median_lo", T::real, "0.3", "lower end of the accepted median band"},
    {"density.median_hi", T::real, "3", "upper end of the accepted median band"},
    {"density.iqr_max", T::real, "3", "accepted interquartile max/min"},
    {"density.save_trees", T::boolean, "true", "write each tree as an LTEX file"},

    {"geometry.enabled", T::boolean, "false", "run the tree geometry checks"},
    {"geometry.trees", T::integer, "20", "simulated trees"},
    {"geometry.p", T::integer, "10000", "time scale of the geometry trees, dt = 1/p"},
    {"geometry.length", T::integer, "10000", "minimum vertices of a geometry tree"},
    {"geometry.quadruples", T::integer, "5000", "random quadruples per tree"},
    {"geometry.epsilon", T::real, "0.01", "local time threshold epsilon (also the level step)"},
    {"geometry.tolerance", T::real, "1e-12", "four-point tolerance"},
    {"geometry.mass_rtol", T::real, "0.1", "accepted local-time mass error"},

    {"packing.subtrees", T::integer, "10", "disjoint subtrees compared"},
    {"packing.subtree_fraction", T::real, "0.05", "target mass fraction of each subtree"},
    {"packing.epsilon", T::real, "1e-3", "largest packing radius"},
    {"packing.levels", T::integer, "6", "dyadic radius levels below epsilon"},
    {"packing.subsample", T::integer, "4096", "centers sampled per subtree"},
    {"packing.max_over_min", T::real, "3", "accepted spread of estimate/mass"},
    {"packing.bank_size", T::integer, "50", "random instances of the enumeration bank"},
};

const std::vector<ExperimentSpec> kExperiments = {
    {"mech-report", "psi, phi and gauge tables, exponents, doubling and sandwich checks", false},
    {"kernels-check", "closed forms, the integral identity, route agreement, v constancy, density bound", false},
    {"doubling", "gauge doubling ratios along dyadic scales", false},
    {"counterexample", "exponents and doubling failure of the counterexample families", false},
    {"spine-laplace", "Monte Carlo Laplace transform of the spine ball mass", true},
    {"subliminf", "liminf of S_r / g(r) across seeds and the Laplace transform of S_1", true},
    {"density", "lower density of the mass measure on simulated trees, optional geometry checks", true},
    {"packing-ratio", "packing optimizer bank and packing-vs-mass constancy", true},
};

const KeySpec* find_key(const std::string& key)
{
    for (const auto& k : kSchema)
        if (k.key == key) return &k;
    return nullptr;
}

std::string trim(std::string s)
{
    auto ws = [](unsigned char c) { return std::isspace(c); };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class V>
bool parse_number(const std::string& s, V& v)
{
    std::string t = trim(s);
    if (t.empty()) return false;
    if constexpr (std::is_floating_point_v<V>) {
        std::istringstream is(t);
        is >> v;
        return !is.fail() && is.eof();
    } else {
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        return ec == std::errc() && p == t.data() + t.size();
    }
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what)
{
    throw ConfigError("key '" + key + "': value '" + value + "' is not " + what);
}

void check_type(const KeySpec& spec, const std::string& value)
{
    long l;
    double d;
    switch (spec.type) {
    case T::integer:
        if (!parse_number(value, l)) bad_value(spec.key, value, "an integer");
        break;
    case T::real:
        if (!parse_number(value, d)) bad_value(spec.key, value, "a real number");
        break;
    case T::boolean:
        if (value != "true" && value != "false") bad_value(spec.key, value, "true or false");
        break;
    case T::int_list:
        for (const auto& item : split(value, ','))
            if (!parse_number(item, l)) bad_value(spec.key, value, "a comma-separated integer list");
        break;
    case T::real_list:
        for (const auto& item : split(value, ','))
            if (!parse_number(item, d)) bad_value(spec.key, value, "a comma-separated real list");
        break;
    case T::text:
        break;
    }
}

void require(bool ok, const std::string& msg)
{
    if (!ok) throw ConfigError(msg);
}

}  // namespace

const std::vector<KeySpec>& schema() { return kSchema; }
const std::vector<ExperimentSpec>& experiments() { return kExperiments; }

const ExperimentSpec* find_experiment(const std::string& name)
{
    for (const auto& e : kExperiments)
        if (e.name == name) return &e;
    return nullptr;
}

std::string LabConfig::raw(const std::string& key) const
{
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    if (auto spec = find_key(key)) return spec->fallback;
    throw ConfigError("unknown key '" + key + "'");
}

long LabConfig::integer(const std::string& key) const
{
    long v;
    if (!parse_number(raw(key), v)) bad_value(key, raw(key), "an integer");
    return v;
}

double LabConfig::real(const std::string& key) const
{
    double v;
    if (!parse_number(raw(key), v)) bad_value(key, raw(key), "a real number");
    return v;
}

bool LabConfig::boolean(const std::string& key) const
{
    auto v = raw(key);
    if (v != "true" && v != "false") bad_value(key, v, "true or false");
    return v == "true";
}

std::vector<long> LabConfig::int_list(const std::string& key) const
{
    std::vector<long> out;
    for (const auto& item : split(raw(key), ',')) {
        long v;
        if (!parse_number(item, v)) bad_value(key, raw(key), "a comma-separated integer list");
        out.push_back(v);
    }
    return out;
}

std::vector<double> LabConfig::real_list(const std::string& key) const
{
    std::vector<double> out;
    for (const auto& item : split(raw(key), ',')) {
        double v;
        if (!parse_number(item, v)) bad_value(key, raw(key), "a comma-separated real list");
        out.push_back(v);
    }
    return out;
}

std::vector<std::uint64_t> LabConfig::seeds() const
{
    std::vector<std::uint64_t> out;
    for (long s : int_list("seeds.list")) out.push_back(static_cast<std::uint64_t>(s));
    return out;
}

mechanism::MechanismDescriptor LabConfig::mechanism() const
{
    mechanism::MechanismDescriptor d;
    d.kind = raw("mechanism.kind");
    d.gamma = real("mechanism.gamma");
    d.alpha = real("mechanism.alpha");
    d.beta = real("mechanism.beta");
    d.n_max = static_cast<int>(integer("mechanism.n_max"));
    d.label = raw("mechanism.label");
    for (const auto& item : split(raw("mechanism.atoms"), ';')) {
        auto parts = split(item, ':');
        double r, a;
        if (parts.size() != 2 || !parse_number(parts[0], r) || !parse_number(parts[1], a))
            bad_value("mechanism.atoms", item, "an atom 'r:a'");
        if (!(r > 0.0) || !(a > 0.0)) bad_value("mechanism.atoms", item, "an atom with positive r and a");
        d.atoms.push_back({std::log(r), std::log(a)});
    }
    return d;
}

json LabConfig::echo() const
{
    json j = json::object();
    for (const auto& k : kSchema) j[k.key] = raw(k.key);
    return j;
}

LabConfig parse_config(const std::string& text)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    LabConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("key '" + section + "' lies outside any section");
        for (const auto& [name, value] : body) {
            std::string key = section + "." + name;
            if (!find_key(key)) throw ConfigError("unknown key '" + key + "'");
            cfg.set(key, trim(value.get_value<std::string>()));
        }
    }
    return cfg;
}

LabConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_overrides(LabConfig& cfg, const std::vector<std::string>& overrides)
{
    for (const auto& item : overrides) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
        std::string key = trim(item.substr(0, eq));
        if (!find_key(key)) throw ConfigError("unknown key '" + key + "' in override");
        cfg.set(key, trim(item.substr(eq + 1)));
    }
}

void validate_config(const LabConfig& cfg)
{
    for (const auto& [key, value] : cfg.explicit_values()) {
        const KeySpec* spec = find_key(key);
        require(spec != nullptr, "unknown key '" + key + "'");
        check_type(*spec, value);
    }
    const std::string name = cfg.experiment();
    require(!name.empty(), "experiment.name is required");
    const ExperimentSpec* exp = find_experiment(name);
    if (!exp) {
        std::string known;
        for (const auto& e : kExperiments) known += (known.empty() ? "" : ", ") + e.name;
        throw ConfigError("unknown experiment '" + name + "'; registered: " + known);
    }
    if (exp->stochastic) require(!cfg.seeds().empty(), "experiment '" + name + "' needs a nonempty seeds.list");
    for (long s : cfg.int_list("seeds.list")) require(s >= 0, "seeds must be nonnegative");
    require(cfg.integer("experiment.threads") >= 1, "experiment.threads must be at least 1");

    const std::string kind = cfg.raw("mechanism.kind");
    require(kind == "stable" || kind == "null" || kind == "atoms" || kind == "counterexample",
            "mechanism.kind must be stable, null, atoms or counterexample");
    try {
        mechanism::build_mechanism(cfg.mechanism());
    } catch (const mechanism::MechanismError& e) {
        throw ConfigError(std::string("mechanism: ") + e.what());
    }

    require(cfg.integer("grid.points") >= 2, "grid.points must be at least 2");
    require(cfg.real("grid.log10_lo") < cfg.real("grid.log10_hi"), "grid range is empty");
    require(cfg.integer("exponents.points") >= 16, "exponents.points must be at least 16");
    require(cfg.real("exponents.floor_q") > 0.0 && cfg.real("exponents.floor_q") <= 1.0,
            "exponents.floor_q must lie in (0, 1]");
    require(cfg.real("exponents.c_step") > 0.0, "exponents.c_step must be positive");
    require(cfg.integer("doubling.k_lo") >= 4 && cfg.integer("doubling.k_lo") <= cfg.integer("doubling.k_hi"),
            "doubling needs 4 <= k_lo <= k_hi");
    require(cfg.integer("counterexample.n_lo") >= 2, "counterexample.n_lo must be at least 2");
    require(!cfg.real_list("kernels.gammas").empty(), "kernels.gammas is empty");
    for (double g : cfg.real_list("kernels.gammas")) require(g > 1.0 && g <= 2.0, "kernels.gammas must lie in (1, 2]");
    for (double g : cfg.real_list("kernels.density_gammas"))
        require(g > 1.0 && g <= 2.0, "kernels.density_gammas must lie in (1, 2]");
    for (const char* key : {"kernels.r", "kernels.lambda", "kernels.a", "kernels.density_r", "spine.r", "spine.lambda"})
        for (double v : cfg.real_list(key)) require(v > 0.0, std::string(key) + " entries must be positive");
    require(cfg.integer("spine.replicates") >= 2, "spine.replicates must be at least 2");
    require(cfg.integer("spine.p") >= 1, "spine.p must be positive");
    require(cfg.integer("subordinator.k_lo") >= 4 && cfg.integer("subordinator.k_lo") <= cfg.integer("subordinator.k_hi"),
            "subordinator window needs 4 <= k_lo <= k_hi");
    require(cfg.integer("subordinator.k_hi") <= cfg.integer("subordinator.nmax"),
            "subordinator.k_hi must not exceed subordinator.nmax");
    require(cfg.integer("subordinator.laplace_replicates") >= 2, "subordinator.laplace_replicates must be at least 2");
    require(cfg.integer("walk.length") >= 2 && cfg.integer("walk.p") >= 1, "walk.length and walk.p must be positive");
    require(cfg.integer("walk.max_factor") >= 1, "walk.max_factor must be at least 1");
    require(cfg.integer("density.centers_per_tree") >= 1, "density.centers_per_tree must be positive");
    require(cfg.integer("density.k_lo") >= 4 && cfg.integer("density.k_lo") <= cfg.integer("density.k_hi"),
            "density window needs 4 <= k_lo <= k_hi");
    require(cfg.integer("geometry.trees") >= 1 && cfg.integer("geometry.p") >= 1 && cfg.integer("geometry.length") >= 2,
            "geometry sizes must be positive");
    require(cfg.real("geometry.epsilon") > 0.0, "geometry.epsilon must be positive");
    require(cfg.integer("packing.subtrees") >= 1, "packing.subtrees must be positive");
    require(cfg.real("packing.subtree_fraction") > 0.0 && cfg.real("packing.subtree_fraction") < 1.0,
            "packing.subtree_fraction must lie in (0, 1)");
    require(cfg.real("packing.epsilon") > 0.0, "packing.epsilon must be positive");
    require(cfg.integer("packing.levels") >= 1 && cfg.integer("packing.subsample") >= 1,
            "packing.levels and packing.subsample must be positive");
    require(cfg.integer("packing.bank_size") >= 0, "packing.bank_size must be nonnegative");
}

}  // namespace levytree::lab
