#pragma once

// Run configuration (plain key=value text), PGM images and CSV outputs.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow_solver.hpp"
#include "functionals.hpp"
#include "grid.hpp"
#include "verify.hpp"
#include "wide.hpp"

namespace fracflow {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    std::string model = "denoise-riesz"; // denoise-gagliardo | denoise-riesz | deblur-riesz | deblur-gagliardo
    double alpha = 0.5;
    double rho = 4.0;            // grid units of length (h = 1 for images)
    double riesz_constant = 1.0;
    double kappa = 1.0;
    std::string fidelity = "l2"; // l2 | l1 | quantile | huber (denoising only)
    double quantile = 0.5;
    double huber_delta = 0.1;
    double blur_sigma = 1.0;     // Gaussian PSF width in pixels (deblurring only)
    int blur_radius = 0;         // 0: ceil(3 sigma), widened if needed for injectivity
    double tau = 0.01;
    double T = 0.5;
    double gap_tolerance = 1e-8;
    int max_iterations = 50000;
    std::vector<double> eps{0.2, 0.1, 0.05};
    std::string input;           // PGM path; empty: synthetic instance
    std::string synthetic = "disk"; // disk (2D) | sine (1D)
    int size = 32;
    double noise = 0.1;
    double h = 0.0;              // grid spacing of synthetic instances; 0: 1 (disk), 1/size (sine)
    std::string output = "out";
    std::uint64_t seed = 1;
    int checkpoint_every = 0;    // write an image every n steps; 0: final only

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string fmt_double(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v)
{
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || !std::isfinite(x)) throw ConfigError("bad number for '" + key + "': " + v);
    return x;
}

inline long long parse_int(const std::string& key, const std::string& v)
{
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0') throw ConfigError("bad integer for '" + key + "': " + v);
    return x;
}

} // namespace detail

/// Lossless text form; parse_config(print_config(c)) == c.
inline std::string print_config(const RunConfig& c)
{
    using detail::fmt_double;
    std::ostringstream o;
    o << "# fracflow run configuration\n";
    o << "model=" << c.model << "\n";
    o << "alpha=" << fmt_double(c.alpha) << "\n";
    o << "# truncation radius, length units\n";
    o << "rho=" << fmt_double(c.rho) << "\n";
    o << "riesz_constant=" << fmt_double(c.riesz_constant) << "\n";
    o << "kappa=" << fmt_double(c.kappa) << "\n";
    o << "fidelity=" << c.fidelity << "\n";
    o << "quantile=" << fmt_double(c.quantile) << "\n";
    o << "huber_delta=" << fmt_double(c.huber_delta) << "\n";
    o << "# PSF width and radius, pixels\n";
    o << "blur_sigma=" << fmt_double(c.blur_sigma) << "\n";
    o << "blur_radius=" << c.blur_radius << "\n";
    o << "# time step and horizon, time units\n";
    o << "tau=" << fmt_double(c.tau) << "\n";
    o << "T=" << fmt_double(c.T) << "\n";
    o << "# per-node duality gap of each step\n";
    o << "gap_tolerance=" << fmt_double(c.gap_tolerance) << "\n";
    o << "max_iterations=" << c.max_iterations << "\n";
    o << "eps=";
    for (std::size_t i = 0; i < c.eps.size(); ++i) o << (i ? "," : "") << fmt_double(c.eps[i]);
    o << "\n";
    o << "input=" << c.input << "\n";
    o << "synthetic=" << c.synthetic << "\n";
    o << "size=" << c.size << "\n";
    o << "noise=" << fmt_double(c.noise) << "\n";
    o << "# synthetic grid spacing; 0 selects 1 (disk) or 1/size (sine)\n";
    o << "h=" << fmt_double(c.h) << "\n";
    o << "output=" << c.output << "\n";
    o << "seed=" << c.seed << "\n";
    o << "checkpoint_every=" << c.checkpoint_every << "\n";
    return o.str();
}

/// Checks every numeric range; throws ConfigError.
inline void validate_config(const RunConfig& c)
{
    static const char* models[] = {"denoise-gagliardo", "denoise-riesz", "deblur-riesz", "deblur-gagliardo"};
    if (std::find(std::begin(models), std::end(models), c.model) == std::end(models))
        throw ConfigError("unknown model: " + c.model);
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (!(c.rho > 0.0)) throw ConfigError("rho must be positive");
    if (!(c.riesz_constant > 0.0)) throw ConfigError("riesz_constant must be positive");
    if (!(c.kappa >= 1.0)) throw ConfigError("kappa must be >= 1");
    if (c.fidelity != "l2" && c.fidelity != "l1" && c.fidelity != "quantile" && c.fidelity != "huber")
        throw ConfigError("unknown fidelity: " + c.fidelity);
    if (!(c.quantile > 0.0 && c.quantile < 1.0)) throw ConfigError("quantile must lie in (0,1)");
    if (!(c.huber_delta > 0.0)) throw ConfigError("huber_delta must be positive");
    if (!(c.blur_sigma > 0.0)) throw ConfigError("blur_sigma must be positive");
    if (c.blur_radius < 0) throw ConfigError("blur_radius must be >= 0");
    if (!(c.tau > 0.0) || !(c.T > 0.0)) throw ConfigError("tau and T must be positive");
    try {
        step_count(c.tau, c.T);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(c.gap_tolerance > 0.0)) throw ConfigError("gap_tolerance must be positive");
    if (c.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    for (double e : c.eps)
        if (!(e > 0.0)) throw ConfigError("eps values must be positive");
    if (c.synthetic != "disk" && c.synthetic != "sine") throw ConfigError("unknown synthetic instance: " + c.synthetic);
    if (c.size < 2) throw ConfigError("size must be >= 2");
    if (!(c.noise >= 0.0)) throw ConfigError("noise must be >= 0");
    if (!(c.h >= 0.0)) throw ConfigError("h must be >= 0");
    if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

inline RunConfig parse_config(const std::string& text)
{
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string v = detail::trim(line.substr(eq + 1));
        const auto d = [&] { return detail::parse_double(key, v); };
        const auto i = [&] { return static_cast<int>(detail::parse_int(key, v)); };
        if (key == "model") c.model = v;
        else if (key == "alpha") c.alpha = d();
        else if (key == "rho") c.rho = d();
        else if (key == "riesz_constant") c.riesz_constant = d();
        else if (key == "kappa") c.kappa = d();
        else if (key == "fidelity") c.fidelity = v;
        else if (key == "quantile") c.quantile = d();
        else if (key == "huber_delta") c.huber_delta = d();
        else if (key == "blur_sigma") c.blur_sigma = d();
        else if (key == "blur_radius") c.blur_radius = i();
        else if (key == "tau") c.tau = d();
        else if (key == "T") c.T = d();
        else if (key == "gap_tolerance") c.gap_tolerance = d();
        else if (key == "max_iterations") c.max_iterations = i();
        else if (key == "eps") {
            c.eps.clear();
            std::istringstream items(v);
            std::string item;
            while (std::getline(items, item, ',')) {
                item = detail::trim(item);
                if (!item.empty()) c.eps.push_back(detail::parse_double(key, item));
            }
        }
        else if (key == "input") c.input = v;
        else if (key == "synthetic") c.synthetic = v;
        else if (key == "size") c.size = i();
        else if (key == "noise") c.noise = d();
        else if (key == "h") c.h = d();
        else if (key == "output") c.output = v;
        else if (key == "seed") {
            const long long s = detail::parse_int(key, v);
            if (s < 0) throw ConfigError("seed must be >= 0");
            c.seed = static_cast<std::uint64_t>(s);
        }
        else if (key == "checkpoint_every") c.checkpoint_every = i();
        else throw ConfigError("unknown key: " + key);
    }
    validate_config(c);
    return c;
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------- PGM

struct Image {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<double> values; // row-major, scaled to [0,1]
};

namespace detail {

inline std::string pgm_token(std::istream& in)
{
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

inline int pgm_int(std::istream& in, const char* what)
{
    const std::string t = pgm_token(in);
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
        throw std::runtime_error(std::string("malformed PGM header: bad ") + what);
    return std::stoi(t);
}

} // namespace detail

inline Image read_pgm(std::istream& in)
{
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P') throw std::runtime_error("unsupported format");
    if (magic[1] != '2' && magic[1] != '5') throw std::runtime_error("unsupported format");
    const bool binary = magic[1] == '5';
    Image img;
    img.width = detail::pgm_int(in, "width");
    img.height = detail::pgm_int(in, "height");
    img.maxval = detail::pgm_int(in, "maxval");
    if (img.width < 1 || img.height < 1) throw std::runtime_error("malformed PGM header: empty image");
    if (img.maxval < 1 || img.maxval > 65535) throw std::runtime_error("malformed PGM header: maxval out of range");
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    img.values.resize(n);
    if (binary) {
        // the header ends with exactly one whitespace byte, already consumed
        const int bytes = img.maxval > 255 ? 2 : 1;
        std::vector<unsigned char> raw(n * bytes);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw std::runtime_error("truncated PGM data");
        for (std::size_t i = 0; i < n; ++i) {
            const int v = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
            if (v > img.maxval) throw std::runtime_error("PGM sample exceeds maxval");
            img.values[i] = static_cast<double>(v) / img.maxval;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::string t = detail::pgm_token(in);
            if (t.empty()) throw std::runtime_error("truncated PGM data");
            if (t.find_first_not_of("0123456789") != std::string::npos)
                throw std::runtime_error("malformed PGM sample");
            const int v = std::stoi(t);
            if (v > img.maxval) throw std::runtime_error("PGM sample exceeds maxval");
            img.values[i] = static_cast<double>(v) / img.maxval;
        }
    }
    return img;
}

inline Image load_pgm(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open image: " + path);
    return read_pgm(f);
}

/// Binary P5; values are clamped to [0,1] and rounded to the image's maxval.
inline void write_pgm(std::ostream& out, const Image& img)
{
    if (img.values.size() != static_cast<std::size_t>(img.width) * img.height)
        throw std::invalid_argument("image size mismatch");
    if (img.maxval < 1 || img.maxval > 65535) throw std::invalid_argument("maxval out of range");
    out << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
    std::vector<unsigned char> raw;
    for (double x : img.values) {
        const int v = static_cast<int>(std::lround(std::clamp(x, 0.0, 1.0) * img.maxval));
        if (img.maxval > 255) raw.push_back(static_cast<unsigned char>(v >> 8));
        raw.push_back(static_cast<unsigned char>(v & 0xff));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

inline void save_pgm(const std::string& path, const Image& img)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write image: " + path);
    write_pgm(f, img);
}

/* Image -> grid function on a 2D domain with h = 1 and rows along axis 0.
 * Zero extension for Riesz models; for Gagliardo the collar replicates the
 * nearest boundary pixel. */
inline GridFunction image_to_grid(const Image& img, DomainPtr dom, ExteriorMode mode)
{
    if (dom->dim() != 2 || dom->shape()[0] != img.height || dom->shape()[1] != img.width)
        throw std::invalid_argument("domain does not match the image");
    std::vector<double> v(img.values);
    if (mode == ExteriorMode::ZeroExtension) return GridFunction::zero_extended(std::move(dom), std::move(v));
    std::vector<double> ext(dom->collar_count());
    for (std::size_t k = 0; k < ext.size(); ++k) {
        const Index& m = dom->multi_index(dom->interior_count() + k);
        const int r = std::clamp(m[0], 0, img.height - 1);
        const int c = std::clamp(m[1], 0, img.width - 1);
        ext[k] = img.values[static_cast<std::size_t>(r) * img.width + c];
    }
    return GridFunction::prescribed(std::move(dom), std::move(v), std::move(ext));
}

inline Image grid_to_image(const GridFunction& u, int maxval = 255)
{
    const auto& d = u.domain();
    Image img;
    img.height = d.shape()[0];
    img.width = d.dim() == 2 ? d.shape()[1] : 1;
    img.maxval = maxval;
    img.values.assign(u.interior().begin(), u.interior().end());
    return img;
}

// ---------------------------------------------------------------- CSV

inline void write_trace_csv(std::ostream& o, const std::vector<EnergyRow>& rows)
{
    using detail::fmt_double;
    o << "k,t,F,TV_term,fidelity_term,step_norm_sq,gap\n";
    for (const auto& r : rows)
        o << r.k << "," << fmt_double(r.t) << "," << fmt_double(r.energy) << "," << fmt_double(r.tv) << ","
          << fmt_double(r.fidelity) << "," << fmt_double(r.step_norm_sq) << "," << fmt_double(r.gap) << "\n";
}

inline void write_report_csv(std::ostream& o, const std::vector<VerificationReport>& rows)
{
    using detail::fmt_double;
    o << "check,instance,slack,tolerance,pass\n";
    for (const auto& r : rows)
        o << r.check << "," << r.instance << "," << fmt_double(r.slack) << "," << fmt_double(r.tolerance) << ","
          << (r.pass ? 1 : 0) << "\n";
}

inline void write_study_csv(std::ostream& o, const std::vector<EpsilonRow>& rows)
{
    using detail::fmt_double;
    o << "eps,discrepancy,wide_value,sweeps,converged\n";
    for (const auto& r : rows)
        o << fmt_double(r.eps) << "," << fmt_double(r.discrepancy) << "," << fmt_double(r.wide_value) << ","
          << r.sweeps << "," << (r.converged ? 1 : 0) << "\n";
}

/// One row per slice: k,t,u_0,...,u_{n-1} (interior values).
inline void write_trajectory_csv(std::ostream& o, const Trajectory& traj)
{
    using detail::fmt_double;
    o << "k,t";
    for (std::size_t i = 0; i < traj.domain().interior_count(); ++i) o << ",u_" << i;
    o << "\n";
    for (std::size_t k = 0; k <= traj.steps(); ++k) {
        o << k << "," << fmt_double(traj.time(k));
        for (double x : traj[k].interior()) o << "," << fmt_double(x);
        o << "\n";
    }
}

inline const char* csv_schema_help()
{
    return "Output files (CSV, header row first, numbers printed with 17 significant digits):\n"
           "  trace.csv      k,t,F,TV_term,fidelity_term,step_norm_sq,gap\n"
           "                 step_norm_sq = |u^k - u^{k-1}|^2 / tau, gap = certified per-node duality gap\n"
           "  report.csv     check,instance,slack,tolerance,pass   (pass iff slack >= -tolerance)\n"
           "  study.csv      eps,discrepancy,wide_value,sweeps,converged\n"
           "  wide_eps_<i>.csv  k,t,u_0,...,u_{n-1}\n"
           "Images: restored_<k>.pgm (P5, maxval 255) per checkpoint and restored.pgm at T.\n";
}

} // namespace fracflow
