#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "simgan/core/png_io.hpp"
#include "simgan/metrics/tsne.hpp"
#include "simgan/simsvc/index.hpp"
#include "simgan/simsvc/server.hpp"

using namespace simgan;
using namespace simgan::simsvc;
namespace fs = std::filesystem;

namespace {

snn::ExtractorConfig tiny_config()
{
    using nn::Activation;
    snn::ExtractorConfig c;
    c.name = "svc-tiny";
    c.encoder = {snn::LayerSpec{snn::LayerKind::Conv, 3, 6, 3, 2, 1, Activation::ReLU},
                 snn::LayerSpec{snn::LayerKind::Conv, 6, 8, 1, 1, 0, Activation::Identity}};
    return c;
}

Image noise_image(int h, int w, std::uint64_t seed)
{
    Rng rng(seed);
    Image img(h, w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                img.at(c, y, x) = static_cast<float>(uniform(rng, 0.0, 1.0));
            }
        }
    }
    quantize_8bit(img);
    return img;
}

class TempDir {
public:
    TempDir()
    {
        path_ = fs::temp_directory_path() / ("simsvc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    static int& counter()
    {
        static int c = 0;
        return c;
    }
    fs::path path_;
};

void write_images(const fs::path& dir, int n, std::uint64_t seed)
{
    fs::create_directories(dir);
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%03d.png", i);
        write_png(dir / name, noise_image(8, 8, seed + static_cast<std::uint64_t>(i)));
    }
}

SimilarityIndex stub_index(const std::vector<std::pair<std::string, Eigen::Vector3d>>& items)
{
    SimilarityIndex idx;
    idx.index_id = "stub";
    idx.extractor_digest = "none";
    for (const auto& [id, v] : items) {
        idx.entries.push_back({id, v, ""});
    }
    return idx;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Independent CSV reader for the reward trace.
std::vector<std::vector<double>> parse_rows(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace

// ---- index ----

TEST(Index, OneEntryPerImageAndDeterministic)
{
    TempDir tmp;
    write_images(tmp.path() / "imgs", 100, 1);
    const snn::LayeredExtractor f(tiny_config(), 1);
    const SimilarityIndex a = build_index(tmp.path() / "imgs", f, "gen");
    const SimilarityIndex b = build_index(tmp.path() / "imgs", f, "gen");
    ASSERT_EQ(a.size(), 100u);
    EXPECT_EQ(a.entries.front().image_id, "img_000");
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.entries[i].image_id, b.entries[i].image_id);
        EXPECT_EQ(a.entries[i].embedding, b.entries[i].embedding);
    }
    EXPECT_EQ(a.extractor_digest, f.digest());
}

TEST(Index, EmptyDirectoryIsError)
{
    TempDir tmp;
    fs::create_directories(tmp.path() / "empty");
    EXPECT_THROW(build_index(tmp.path() / "empty", snn::LayeredExtractor(tiny_config(), 1), "x"), InvalidInput);
}

TEST(Index, UnreadableImageSkippedWithWarning)
{
    TempDir tmp;
    write_images(tmp.path() / "imgs", 3, 1);
    std::ofstream(tmp.path() / "imgs" / "broken.png") << "not a png";
    write_png(tmp.path() / "imgs" / "odd.png", noise_image(7, 7, 3)); // not a multiple of 2
    std::vector<std::string> warnings;
    log::quiet() = true;
    const SimilarityIndex idx = build_index(tmp.path() / "imgs", snn::LayeredExtractor(tiny_config(), 1), "x", &warnings);
    log::quiet() = false;
    EXPECT_EQ(idx.size(), 3u);
    EXPECT_EQ(warnings.size(), 2u);
}

TEST(Index, PersistRoundTripAndTamper)
{
    TempDir tmp;
    write_images(tmp.path() / "imgs", 6, 2);
    const SimilarityIndex a = build_index(tmp.path() / "imgs", snn::LayeredExtractor(tiny_config(), 1), "run-a");
    save_index(tmp.path() / "idx", a);
    for (const auto& e : fs::directory_iterator(tmp.path() / "idx")) {
        EXPECT_NE(e.path().extension(), ".tmp");
    }
    EXPECT_EQ(list_indexes(tmp.path() / "idx"), std::vector<std::string>{"run-a"});
    const SimilarityIndex b = load_index(tmp.path() / "idx", "run-a");
    ASSERT_EQ(b.size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(b.entries[i].image_id, a.entries[i].image_id);
        EXPECT_EQ(b.entries[i].embedding, a.entries[i].embedding);
    }
    EXPECT_EQ(b.extractor_digest, a.extractor_digest);
    {
        std::fstream f(tmp.path() / "idx" / "run-a.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(3);
        f.put('\x7f');
    }
    EXPECT_THROW(load_index(tmp.path() / "idx", "run-a"), DependencyError);
    EXPECT_THROW(load_index(tmp.path() / "idx", "missing"), DependencyError);
    EXPECT_THROW(load_index(tmp.path() / "idx", "../etc"), InvalidInput);
}

// ---- query ----

TEST(Query, IndexedImageRanksFirstWithUnitScore)
{
    TempDir tmp;
    write_images(tmp.path() / "imgs", 10, 5);
    const snn::LayeredExtractor f(tiny_config(), 1);
    const SimilarityIndex idx = build_index(tmp.path() / "imgs", f, "q");
    const Image q = read_png(tmp.path() / "imgs" / "img_004.png");
    const QueryResult r = query_topk(idx, f, q, 3);
    ASSERT_EQ(r.results.size(), 3u);
    EXPECT_EQ(r.results[0].image_id, "img_004");
    EXPECT_NEAR(r.results[0].score, 1.0, 1e-12);
    for (std::size_t i = 1; i < r.results.size(); ++i) {
        EXPECT_GE(r.results[i - 1].score, r.results[i].score);
    }
    EXPECT_EQ(query_topk(idx, f, q, 3).query_digest, r.query_digest);
}

TEST(Query, KLargerThanIndexReturnsAll)
{
    const SimilarityIndex idx = stub_index({{"a", {1, 0, 0}}, {"b", {0, 1, 0}}});
    EXPECT_EQ(rank(idx, Eigen::Vector3d(1, 1, 0), 3).size(), 2u);
    EXPECT_THROW(rank(idx, Eigen::Vector3d(1, 1, 0), 0), InvalidInput);
}

TEST(Query, StubOrderingMatchesBruteForce)
{
    const SimilarityIndex idx = stub_index({{"e", {1, 2, 0}},
                                            {"a", {0, 1, 0}},
                                            {"d", {2, 4, 0}},
                                            {"c", {1, 0, 0}},
                                            {"b", {-1, 0, 3}}});
    const Eigen::Vector3d q(1, 1, 0);
    std::vector<std::pair<double, std::string>> oracle;
    for (const auto& e : idx.entries) {
        const double cos = std::max(0.0, e.embedding.dot(q) / (e.embedding.norm() * q.norm()));
        oracle.emplace_back(-cos, e.image_id);
    }
    std::sort(oracle.begin(), oracle.end());
    const auto got = rank(idx, q, 5);
    ASSERT_EQ(got.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(got[i].image_id, oracle[i].second);
        EXPECT_NEAR(got[i].score, -oracle[i].first, 1e-12);
    }
    // d and e are parallel: equal scores, id order
    EXPECT_EQ(got[0].image_id, "d");
    EXPECT_EQ(got[1].image_id, "e");
}

TEST(Query, ForeignExtractorRejected)
{
    TempDir tmp;
    write_images(tmp.path() / "imgs", 4, 5);
    const snn::LayeredExtractor fa(tiny_config(), 1);
    const snn::LayeredExtractor fb(tiny_config(), 2);
    const SimilarityIndex idx = build_index(tmp.path() / "imgs", fa, "q");
    EXPECT_THROW(query_topk(idx, fb, noise_image(8, 8, 1), 2), InvalidInput);
    EXPECT_THROW(query_topk(idx, fa, noise_image(7, 7, 1), 2), InvalidInput);
}

// ---- HTTP ----

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        log::quiet() = true;
        write_images(tmp_.path() / "gen", 12, 40);
        ServiceConfig cfg;
        cfg.port = 0;
        cfg.index_dir = tmp_.path() / "indexes";
        cfg.runs_dir = tmp_.path() / "runs";
        svc_ = std::make_unique<Service>(cfg, extractor_);
        port_ = svc_->start();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    }

    void TearDown() override
    {
        svc_->stop();
        log::quiet() = false;
    }

    void build(const std::string& id)
    {
        const nlohmann::json body = {{"image_dir", (tmp_.path() / "gen").string()}, {"index_id", id}};
        auto res = client_->Post("/indexes", body.dump(), "application/json");
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 201) << res->body;
    }

    httplib::Result query(const std::string& id, const std::string& png, const std::string& k)
    {
        httplib::MultipartFormDataItems items = {{"image", png, "q.png", "image/png"},
                                                 {"index_id", id, "", ""},
                                                 {"k", k, "", ""}};
        return client_->Post("/query", items);
    }

    TempDir tmp_;
    snn::LayeredExtractor extractor_{tiny_config(), 7};
    std::unique_ptr<Service> svc_;
    std::unique_ptr<httplib::Client> client_;
    int port_ = 0;
};

TEST_F(ServiceTest, Health)
{
    auto res = client_->Get("/health");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const auto j = nlohmann::json::parse(res->body);
    EXPECT_EQ(j.at("status"), "ok");
    EXPECT_TRUE(j.contains("version"));
}

TEST_F(ServiceTest, BuildListAndQuery)
{
    build("gen");
    auto list = client_->Get("/indexes");
    ASSERT_TRUE(list);
    const auto arr = nlohmann::json::parse(list->body);
    ASSERT_EQ(arr.size(), 1u);
    EXPECT_EQ(arr[0].at("index_id"), "gen");
    EXPECT_EQ(arr[0].at("entries"), 12);

    const Image q = noise_image(8, 8, 999);
    const std::string png = encode_png(q);
    auto res = query("gen", png, "5");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto j = nlohmann::json::parse(res->body);
    const auto& results = j.at("results");
    ASSERT_LE(results.size(), 5u);
    ASSERT_EQ(results.size(), 5u);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const double s = results[i].at("score").get<double>();
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        if (i > 0) {
            EXPECT_GE(results[i - 1].at("score").get<double>(), s);
        }
        const std::string id = results[i].at("image_id").get<std::string>();
        EXPECT_EQ(results[i].at("url"), "/images/gen/" + id);
        const Image stored = read_png(tmp_.path() / "gen" / (id + ".png"));
        EXPECT_NEAR(s, snn::score_pair(extractor_, decode_png(png), stored), 1e-6);
    }
    auto again = query("gen", png, "5");
    ASSERT_TRUE(again);
    EXPECT_EQ(again->body, res->body);
}

TEST_F(ServiceTest, ImageEndpointServesIndexedFile)
{
    build("gen");
    auto res = client_->Get("/images/gen/img_003");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(res->body, slurp(tmp_.path() / "gen" / "img_003.png"));
    EXPECT_EQ(client_->Get("/images/gen/nope")->status, 404);
    EXPECT_EQ(client_->Get("/images/missing/img_003")->status, 404);
}

TEST_F(ServiceTest, QueryErrors)
{
    build("gen");
    EXPECT_EQ(query("missing", encode_png(noise_image(8, 8, 1)), "3")->status, 404);
    EXPECT_EQ(query("gen", "garbage", "3")->status, 400);
    EXPECT_EQ(query("gen", encode_png(noise_image(7, 7, 1)), "3")->status, 400);
    EXPECT_EQ(query("gen", encode_png(noise_image(8, 8, 1)), "0")->status, 400);
    auto plain = client_->Post("/query", "{}", "application/json");
    ASSERT_TRUE(plain);
    EXPECT_EQ(plain->status, 400);
    auto bad = client_->Post("/indexes", "{\"index_id\": \"x\"}", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
}

TEST_F(ServiceTest, RewardsMatchCsvInIterationOrder)
{
    gan::RewardTrace t;
    for (int i = 0; i < 7; ++i) {
        t.records.push_back({i, i / 3, 1.0 + i * 0.1, 0.3 * (i % 4) / 3.0, 1.0 + i * 0.1 - 0.3 * (i % 4) / 3.0,
                             0.7 - i * 0.01, (i % 4) / 3.0});
    }
    const fs::path csv = tmp_.path() / "runs" / "run1" / kRewardsFile;
    t.write_csv(csv);
    auto res = client_->Get("/runs/run1/rewards");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    const auto j = nlohmann::json::parse(res->body);
    const auto rows = parse_rows(slurp(csv));
    ASSERT_EQ(j.size(), rows.size());
    const char* keys[] = {"iter", "epoch", "l_d", "reward", "l_d_mod", "l_g", "mean_sim"};
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < 7; ++c) {
            EXPECT_EQ(j[r].at(keys[c]).get<double>(), rows[r][c]);
        }
    }

    std::ofstream(csv, std::ios::app) << "7,2,1.5,0.1"; // row still being written
    auto partial = client_->Get("/runs/run1/rewards");
    ASSERT_TRUE(partial);
    EXPECT_EQ(nlohmann::json::parse(partial->body).size(), rows.size());

    auto runs = client_->Get("/runs");
    ASSERT_TRUE(runs);
    const auto list = nlohmann::json::parse(runs->body);
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0].at("id"), "run1");
    EXPECT_EQ(client_->Get("/runs/none/rewards")->status, 404);
}

TEST_F(ServiceTest, TsneCsv)
{
    std::vector<metrics::TsnePoint> pts{{0.5, -1.0, "real"}, {2.0, 3.0, "generated"}};
    fs::create_directories(tmp_.path() / "runs" / "run2");
    std::ofstream(tmp_.path() / "runs" / "run2" / kRewardsFile) << gan::kTraceHeader << "\n";
    std::ofstream(tmp_.path() / "runs" / "run2" / kTsneFile) << metrics::tsne_csv(pts);
    auto res = client_->Get("/runs/run2/tsne");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body, metrics::tsne_csv(pts));
    EXPECT_EQ(nlohmann::json::parse(client_->Get("/runs/run2/rewards")->body).size(), 0u);
}

TEST_F(ServiceTest, PortConflictIsStartupError)
{
    ServiceConfig cfg;
    cfg.port = port_;
    Service other(cfg, extractor_);
    EXPECT_THROW(other.bind(), DependencyError);
}
