#include "rlstm/model_store.hpp"

#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace rlstm;

namespace {

TrainedModel make_model(Variant v = Variant::C, Task task = Task::Frequency, std::uint64_t seed = 3)
{
    ModelConfig cfg = default_config(task);
    cfg.variant = v;
    cfg.seed = seed;
    const Dataset ds = generate_dataset(kDefaultRawSamples, kDefaultDataSeed).dataset;
    return TrainedModel{TransformerLstm(cfg), NormStats::fit(inputs_of(ds), targets_of(ds, task))};
}

std::string sha256_hex(const std::string& data)
{
    unsigned char d[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), d, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", d[i]);
        out += buf;
    }
    return out;
}

/// Replaces the checksum line so that edits to the body pass the integrity check.
std::string resign(std::string bytes)
{
    const auto pos = bytes.rfind("checksum sha256 ");
    bytes.erase(pos);
    return bytes + "checksum sha256 " + sha256_hex(bytes) + "\n";
}

/// Rewrites the "weights <count>" header.
std::string with_count(std::string bytes, long delta)
{
    const auto at = bytes.find("\nweights ");
    const auto end = bytes.find('\n', at + 1);
    const long n = std::stol(bytes.substr(at + 9, end - at - 9));
    return bytes.replace(at + 9, end - at - 9, std::to_string(n + delta));
}

std::string drop_line_starting(const std::string& bytes, const std::string& prefix)
{
    const auto at = bytes.find("\n" + prefix);
    EXPECT_NE(at, std::string::npos) << prefix;
    const auto end = bytes.find('\n', at + 1);
    return bytes.substr(0, at) + bytes.substr(end);
}

ModelLoadError::Kind load_error(const std::string& bytes, std::optional<Task> task = std::nullopt)
{
    try {
        deserialize_model(bytes, task);
    } catch (const ModelLoadError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a ModelLoadError";
    return ModelLoadError::Kind::Io;
}

Mat random_inputs(int n, std::uint64_t seed)
{
    Rng rng(seed);
    Mat x(n, 3);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.uniform(1.5, 2.9);
        x(i, 1) = rng.uniform(0.4, 1.1);
        x(i, 2) = rng.uniform(0.13, 0.19);
    }
    return x;
}

} // namespace

TEST(Hexfloat, RoundTripsExactly)
{
    Rng rng(11);
    const double specials[] = {0.0, -0.0, 1.0, -2.5, 1e-310, std::numeric_limits<double>::denorm_min(),
                               std::numeric_limits<double>::max(), std::numeric_limits<double>::min(), 0.1};
    for (double v : specials) {
        const double back = parse_hexfloat(format_hexfloat(v));
        EXPECT_EQ(std::signbit(back), std::signbit(v));
        EXPECT_EQ(back, v) << format_hexfloat(v);
    }
    for (int i = 0; i < 10000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
        ASSERT_EQ(parse_hexfloat(format_hexfloat(v)), v);
    }
    EXPECT_EQ(format_hexfloat(3.0), "0x1.8p+1");
    EXPECT_THROW(parse_hexfloat("1.5"), ModelLoadError);
    EXPECT_THROW(parse_hexfloat("0x1.8q+1"), ModelLoadError);
}

TEST(ModelStore, RoundTripIsBitExact)
{
    for (Variant v : kAllVariants) {
        const TrainedModel m = make_model(v, Task::Radius, 9);
        const TrainedModel back = deserialize_model(serialize_model(m));
        EXPECT_EQ(back.task(), Task::Radius);
        EXPECT_EQ(back.model.config().variant, v);
        const Mat x = random_inputs(100, 5);
        const Mat a = m.predict(x), b = back.predict(x);
        ASSERT_EQ(a.rows(), b.rows());
        EXPECT_TRUE((a.array() == b.array()).all()) << to_string(v);
    }
}

TEST(ModelStore, SerializationIsCanonical)
{
    const TrainedModel m = make_model();
    const std::string once = serialize_model(m);
    EXPECT_EQ(once, serialize_model(make_model()));
    EXPECT_EQ(serialize_model(deserialize_model(once)), once);
    EXPECT_NE(once, serialize_model(make_model(Variant::C, Task::Frequency, 4)));
    EXPECT_EQ(once.substr(0, 12), "rlstm-model\n");
}

TEST(ModelStore, SharedAttentionStaysShared)
{
    const TrainedModel back = deserialize_model(serialize_model(make_model(Variant::C)));
    EXPECT_EQ(back.model.params().aliases().size(), 8u);
    EXPECT_EQ(back.model.params().scalar_count(), make_model(Variant::C).model.params().scalar_count());
}

TEST(ModelStore, AnyFlippedByteIsRejected)
{
    const std::string bytes = serialize_model(make_model());
    const auto body_end = bytes.rfind("checksum sha256 ");
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        std::string bad = bytes;
        const auto at = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(body_end) - 1));
        bad[at] = static_cast<char>(bad[at] ^ 0x01);
        EXPECT_THROW(deserialize_model(bad), ModelLoadError);
        try {
            deserialize_model(bad);
        } catch (const ModelLoadError& e) {
            ASSERT_EQ(e.kind(), ModelLoadError::Kind::Checksum) << "byte " << at << ": " << e.what();
        }
    }
}

TEST(ModelStore, TaskMismatchIsReported)
{
    const std::string freq = serialize_model(make_model(Variant::C, Task::Frequency));
    EXPECT_EQ(load_error(freq, Task::Radius), ModelLoadError::Kind::TaskMismatch);
    EXPECT_NO_THROW(deserialize_model(freq, Task::Frequency));
}

TEST(ModelStore, VersionIsChecked)
{
    std::string bytes = serialize_model(make_model());
    const auto at = bytes.find("format_version 1\n");
    ASSERT_NE(at, std::string::npos);
    bytes.replace(at, 16, "format_version 2");
    EXPECT_EQ(load_error(resign(bytes)), ModelLoadError::Kind::Version);
}

TEST(ModelStore, MissingAndExtraWeights)
{
    const std::string bytes = serialize_model(make_model(Variant::Baseline));
    EXPECT_EQ(load_error(resign(with_count(drop_line_starting(bytes, "weight head."), -1))), ModelLoadError::Kind::MissingWeight);

    const auto at = bytes.find("\nweight head.");
    const auto end = bytes.find('\n', at + 1);
    std::string line = bytes.substr(at, end - at);
    line.replace(line.find("head."), 5, "headx.");
    std::string extra = bytes;
    extra.insert(end, line);
    EXPECT_EQ(load_error(resign(with_count(extra, 1))), ModelLoadError::Kind::ExtraWeight);
}

TEST(ModelStore, ShapeMismatch)
{
    std::string bytes = serialize_model(make_model(Variant::Baseline));
    const auto at = bytes.find("\nweight head.");
    const auto sp1 = bytes.find(' ', at + 8);
    const auto sp2 = bytes.find(' ', sp1 + 1);
    const auto sp3 = bytes.find(' ', sp2 + 1);
    const int rows = std::stoi(bytes.substr(sp1 + 1, sp2 - sp1 - 1));
    const int cols = std::stoi(bytes.substr(sp2 + 1, sp3 - sp2 - 1));
    bytes.replace(sp1 + 1, sp3 - sp1 - 1, std::to_string(cols) + " " + std::to_string(rows));
    if (rows == cols)
        GTEST_SKIP();
    EXPECT_EQ(load_error(resign(bytes)), ModelLoadError::Kind::Shape);
}

TEST(ModelStore, TruncatedAndGarbageInput)
{
    const std::string bytes = serialize_model(make_model());
    EXPECT_EQ(load_error(""), ModelLoadError::Kind::Format);
    EXPECT_EQ(load_error("not a model\n"), ModelLoadError::Kind::Format);
    EXPECT_EQ(load_error(bytes.substr(0, bytes.size() / 2)), ModelLoadError::Kind::Format);
}

TEST(ModelStore, SaveIsAtomicAndLoadsBack)
{
    const auto dir = std::filesystem::temp_directory_path() / ("rlstm_store_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "m.rlstm").string();
    const TrainedModel a = make_model(Variant::A, Task::Frequency, 1);
    const TrainedModel b = make_model(Variant::B, Task::Frequency, 2);
    save_model(a, path);
    save_model(b, path);
    EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
    const TrainedModel back = load_model(path, Task::Frequency);
    EXPECT_EQ(back.model.config().variant, Variant::B);
    EXPECT_EQ(serialize_model(back), serialize_model(b));

    EXPECT_THROW(save_model(a, (dir / "no_such_dir" / "m.rlstm").string()), DataError);
    EXPECT_EQ(load_model(path).task(), Task::Frequency);
    try {
        load_model((dir / "absent.rlstm").string());
        ADD_FAILURE();
    } catch (const ModelLoadError& e) {
        EXPECT_EQ(e.kind(), ModelLoadError::Kind::Io);
    }
    std::filesystem::remove_all(dir);
}
