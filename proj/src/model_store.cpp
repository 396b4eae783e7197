#include "rlstm/model_store.hpp"

#include "rlstm/errors.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

namespace rlstm {

using Kind = ModelLoadError::Kind;

std::string format_hexfloat(double v)
{
    if (!std::isfinite(v))
        throw ContractError("format_hexfloat: non-finite value");
    const auto bits = std::bit_cast<std::uint64_t>(v);
    std::string out = (bits >> 63) ? "-" : "";
    const int biased = static_cast<int>((bits >> 52) & 0x7ff);
    std::uint64_t mant = bits & ((std::uint64_t{1} << 52) - 1);
    if (biased == 0 && mant == 0)
        return out + "0x0p+0";
    out += biased == 0 ? "0x0" : "0x1";
    if (mant != 0) {
        static const char* digits = "0123456789abcdef";
        std::string frac;
        for (int shift = 48; shift >= 0; shift -= 4)
            frac += digits[(mant >> shift) & 0xf];
        frac.erase(frac.find_last_not_of('0') + 1);
        out += "." + frac;
    }
    const int exp = biased == 0 ? -1022 : biased - 1023;
    out += exp < 0 ? "p-" : "p+";
    out += std::to_string(std::abs(exp));
    return out;
}

double parse_hexfloat(const std::string& s)
{
    auto fail = [&s]() -> double { throw ModelLoadError(Kind::Format, "malformed hexfloat '" + s + "'"); };
    std::size_t i = 0;
    bool negative = false;
    if (i < s.size() && s[i] == '-') {
        negative = true;
        ++i;
    }
    if (s.compare(i, 2, "0x") != 0)
        return fail();
    i += 2;
    if (i >= s.size() || (s[i] != '0' && s[i] != '1'))
        return fail();
    std::uint64_t mant = static_cast<std::uint64_t>(s[i] - '0');
    ++i;
    int frac_digits = 0;
    if (i < s.size() && s[i] == '.') {
        ++i;
        while (i < s.size() && std::isxdigit(static_cast<unsigned char>(s[i]))) {
            if (++frac_digits > 13)
                return fail();
            const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
            mant = (mant << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
            ++i;
        }
        if (frac_digits == 0)
            return fail();
    }
    if (i >= s.size() || s[i] != 'p')
        return fail();
    ++i;
    if (i >= s.size() || (s[i] != '+' && s[i] != '-'))
        return fail();
    const bool exp_negative = s[i] == '-';
    ++i;
    if (i >= s.size() || s.size() - i > 4)
        return fail();
    int exp = 0;
    for (; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            return fail();
        exp = exp * 10 + (s[i] - '0');
    }
    if (exp_negative)
        exp = -exp;
    const double v = std::ldexp(static_cast<double>(mant), exp - 4 * frac_digits);
    if (!std::isfinite(v))
        return fail();
    return negative ? -v : v;
}

namespace {

std::string base64_encode(const Mat& m)
{
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(m.size()) * 8);
    for (Index i = 0; i < m.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
        for (int b = 0; b < 8; ++b)
            bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

Mat base64_decode(const std::string& text, Index rows, Index cols, const std::string& path)
{
    const auto expected = static_cast<std::size_t>(rows * cols) * 8;
    if (text.size() != 4 * ((expected + 2) / 3))
        throw ModelLoadError(Kind::Shape, "weight '" + path + "': blob length does not match shape " +
                                              shape_str(rows, cols));
    std::vector<unsigned char> bytes(text.size() / 4 * 3 + 3);
    const int n = EVP_DecodeBlock(bytes.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0 || static_cast<std::size_t>(n) < expected)
        throw ModelLoadError(Kind::Format, "weight '" + path + "': invalid base64");
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(b)])
                    << (8 * b);
        m.data()[i] = std::bit_cast<double>(bits);
        if (!std::isfinite(m.data()[i]))
            throw ModelLoadError(Kind::Format, "weight '" + path + "': non-finite value");
    }
    return m;
}

std::string sha256_hex(const std::string& data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

void write_vector(std::ostream& os, const char* key, const Eigen::VectorXd& v)
{
    os << key;
    for (Index i = 0; i < v.size(); ++i)
        os << ' ' << format_hexfloat(v(i));
    os << '\n';
}

constexpr const char* kMagic = "rlstm-model";
constexpr const char* kChecksumPrefix = "checksum sha256 ";

class LineReader {
public:
    explicit LineReader(const std::string& text) : in_(text) {}

    std::vector<std::string> next(const std::string& key)
    {
        std::string line;
        if (!std::getline(in_, line))
            throw ModelLoadError(Kind::Format, "model file truncated before '" + key + "'");
        ++lineno_;
        std::istringstream ls(line);
        std::vector<std::string> fields{std::istream_iterator<std::string>(ls), std::istream_iterator<std::string>()};
        if (fields.empty() || fields[0] != key)
            throw ModelLoadError(Kind::Format,
                                 "model file line " + std::to_string(lineno_) + ": expected '" + key + "'");
        fields.erase(fields.begin());
        return fields;
    }

    std::string value(const std::string& key)
    {
        auto f = next(key);
        if (f.size() != 1)
            throw ModelLoadError(Kind::Format,
                                 "model file line " + std::to_string(lineno_) + ": '" + key + "' takes one value");
        return f[0];
    }

    long integer(const std::string& key)
    {
        const std::string v = value(key);
        std::size_t used = 0;
        long n = 0;
        try {
            n = std::stol(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size())
            throw ModelLoadError(Kind::Format, "model file line " + std::to_string(lineno_) + ": bad integer '" + v + "'");
        return n;
    }

    Eigen::VectorXd vector(const std::string& key, Index n)
    {
        const auto f = next(key);
        if (static_cast<Index>(f.size()) != n)
            throw ModelLoadError(Kind::Format, "model file line " + std::to_string(lineno_) + ": '" + key +
                                                   "' needs " + std::to_string(n) + " values");
        Eigen::VectorXd v(n);
        for (Index i = 0; i < n; ++i)
            v(i) = parse_hexfloat(f[static_cast<std::size_t>(i)]);
        return v;
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istringstream in_;
    int lineno_ = 0;
};

} // namespace

std::string serialize_model(const TrainedModel& model)
{
    const ModelConfig& cfg = model.model.config();
    const ParamStore<double>& params = model.model.params();
    std::ostringstream os;
    os << kMagic << '\n';
    os << "format_version " << kModelFormatVersion << '\n';
    os << "task " << to_string(cfg.task) << '\n';
    os << "variant " << to_string(cfg.variant) << '\n';
    os << "d_model " << cfg.d_model << '\n';
    os << "numhead " << cfg.numhead << '\n';
    os << "numdrop " << format_hexfloat(cfg.numdrop) << '\n';
    os << "numlstm " << cfg.numlstm << '\n';
    os << "n_encoder_layers " << cfg.n_encoder_layers << '\n';
    os << "share_attention " << (cfg.share_attention ? 1 : 0) << '\n';
    os << "seed " << cfg.seed << '\n';
    write_vector(os, "input_mean", model.stats.input_mean);
    write_vector(os, "input_std", model.stats.input_std);
    write_vector(os, "target_mean", model.stats.target_mean);
    write_vector(os, "target_std", model.stats.target_std);
    os << "weights " << params.owned().size() << '\n';
    for (const auto& [path, p] : params.owned())
        os << "weight " << path << ' ' << p.value.rows() << ' ' << p.value.cols() << ' ' << base64_encode(p.value)
           << '\n';
    for (const auto& [path, target] : params.aliases())
        os << "alias " << path << ' ' << target << '\n';
    std::string body = os.str();
    return body + kChecksumPrefix + sha256_hex(body) + '\n';
}

TrainedModel deserialize_model(const std::string& bytes, std::optional<Task> expected)
{
    LineReader head(bytes);
    head.next(kMagic);
    const long version = head.integer("format_version");
    if (version != kModelFormatVersion)
        throw ModelLoadError(Kind::Version, "unsupported model format_version " + std::to_string(version) +
                                                " (this build reads " + std::to_string(kModelFormatVersion) + ")");

    const std::size_t body_end = bytes.rfind(kChecksumPrefix);
    if (body_end == std::string::npos || (body_end != 0 && bytes[body_end - 1] != '\n'))
        throw ModelLoadError(Kind::Format, "model file has no checksum line");
    std::string stored = bytes.substr(body_end + std::char_traits<char>::length(kChecksumPrefix));
    if (!stored.empty() && stored.back() == '\n')
        stored.pop_back();
    const std::string body = bytes.substr(0, body_end);
    if (stored != sha256_hex(body))
        throw ModelLoadError(Kind::Checksum, "model file checksum mismatch (file is corrupted)");

    LineReader in(body);
    in.next(kMagic);
    in.integer("format_version");
    ModelConfig cfg;
    try {
        cfg.task = parse_task(in.value("task"));
        cfg.variant = parse_variant(in.value("variant"));
    } catch (const ContractError& e) {
        throw ModelLoadError(Kind::Format, e.what());
    }
    cfg.d_model = static_cast<int>(in.integer("d_model"));
    cfg.numhead = static_cast<int>(in.integer("numhead"));
    cfg.numdrop = parse_hexfloat(in.value("numdrop"));
    cfg.numlstm = static_cast<int>(in.integer("numlstm"));
    cfg.n_encoder_layers = static_cast<int>(in.integer("n_encoder_layers"));
    cfg.share_attention = in.integer("share_attention") != 0;
    {
        const std::string s = in.value("seed");
        try {
            std::size_t used = 0;
            cfg.seed = std::stoull(s, &used);
            if (used != s.size())
                throw std::invalid_argument(s);
        } catch (const std::exception&) {
            throw ModelLoadError(Kind::Format, "model file: bad seed '" + s + "'");
        }
    }
    try {
        cfg.validate();
    } catch (const ContractError& e) {
        throw ModelLoadError(Kind::Format, std::string("model file: invalid configuration: ") + e.what());
    }
    if (expected && *expected != cfg.task)
        throw ModelLoadError(Kind::TaskMismatch, "model serves the " + to_string(cfg.task) + " task, expected " +
                                                     to_string(*expected));

    NormStats stats;
    stats.input_mean = in.vector("input_mean", 3);
    stats.input_std = in.vector("input_std", 3);
    stats.target_mean = in.vector("target_mean", cfg.out_dim());
    stats.target_std = in.vector("target_std", cfg.out_dim());

    const ParamStore<double> ref = build_parameters(cfg);
    const long count = in.integer("weights");
    ParamStore<double> store;
    for (long k = 0; k < count; ++k) {
        const auto f = in.next("weight");
        if (f.size() != 4)
            throw ModelLoadError(Kind::Format, "model file: weight line needs path, rows, cols and data");
        const std::string& path = f[0];
        if (!ref.contains(path) || ref.is_alias(path))
            throw ModelLoadError(Kind::ExtraWeight, "model file: unexpected weight '" + path + "'");
        if (store.contains(path))
            throw ModelLoadError(Kind::Format, "model file: weight '" + path + "' listed twice");
        Index rows = 0, cols = 0;
        try {
            rows = std::stol(f[1]);
            cols = std::stol(f[2]);
        } catch (const std::exception&) {
            throw ModelLoadError(Kind::Format, "model file: bad shape for weight '" + path + "'");
        }
        const Mat& want = ref.at(path).value;
        if (rows != want.rows() || cols != want.cols())
            throw ModelLoadError(Kind::Shape, "weight '" + path + "' has shape " + shape_str(rows, cols) +
                                                  ", expected " + shape_str(want.rows(), want.cols()));
        store.add(path, base64_decode(f[3], rows, cols, path));
    }
    while (!in.at_end()) {
        const auto f = in.next("alias");
        if (f.size() != 2)
            throw ModelLoadError(Kind::Format, "model file: alias line needs path and target");
        auto it = ref.aliases().find(f[0]);
        if (it == ref.aliases().end() || it->second != f[1])
            throw ModelLoadError(Kind::ExtraWeight, "model file: unexpected alias '" + f[0] + "'");
        if (!store.contains(f[1]))
            throw ModelLoadError(Kind::MissingWeight, "model file: alias target '" + f[1] + "' missing");
        store.alias(f[0], f[1]);
    }
    for (const auto& path : ref.paths())
        if (!store.contains(path))
            throw ModelLoadError(Kind::MissingWeight, "model file: missing weight '" + path + "'");
    for (const auto& [path, target] : ref.aliases())
        if (!store.contains(path))
            throw ModelLoadError(Kind::MissingWeight, "model file: missing alias '" + path + "'");

    return TrainedModel{TransformerLstm(cfg, std::move(store)), std::move(stats)};
}

void save_model(const TrainedModel& model, const std::string& path)
{
    const std::string bytes = serialize_model(model);
    const std::filesystem::path dest(path);
    std::filesystem::path tmp = dest;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw DataError("cannot write model file '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out)
            throw DataError("failed writing model file '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, dest, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw DataError("cannot move model file into place at '" + path + "'");
    }
}

TrainedModel load_model(const std::string& path, std::optional<Task> expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ModelLoadError(Kind::Io, "cannot open model file '" + path + "'");
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_model(bytes, expected);
}

} // namespace rlstm
