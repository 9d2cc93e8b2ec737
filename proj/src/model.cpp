#include "stresskit/model/model.hpp"

#include <algorithm>
#include <numeric>

namespace stresskit::model {

const char* to_string(Fusion f) {
    switch (f) {
        case Fusion::unimodal: return "unimodal";
        case Fusion::early: return "early";
        case Fusion::cross_modal: return "cross_modal";
    }
    return "?";
}

Fusion parse_fusion(const std::string& s) {
    if (s == "unimodal") return Fusion::unimodal;
    if (s == "early") return Fusion::early;
    if (s == "cross_modal") return Fusion::cross_modal;
    throw ConfigError("unknown fusion '" + s + "'");
}

void ModelConfig::validate() const {
    if (embed_dim <= 0 || n_layers < 0 || n_heads <= 0 || head_hidden <= 0)
        throw ConfigError("model dims must be positive");
    if (embed_dim % n_heads != 0) throw ConfigError("embed_dim must be divisible by n_heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
    if (max_t <= 0) throw ConfigError("max_t must be positive");
    if (input_dim <= 0) throw ConfigError("input_dim must be set");
    if (fusion == Fusion::cross_modal && input_dim_b <= 0)
        throw ConfigError("cross-modal config needs input_dim_b");
    for (int k : stem_kernels)
        if (k <= 0 || k % 2 == 0) throw ConfigError("stem kernels must be odd and positive");
    if (stem_kernels.empty()) throw ConfigError("at least one stem kernel required");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"embed_dim", embed_dim},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"ffn_dim", ffn_dim},
            {"dropout", dropout},
            {"max_t", max_t},
            {"stem_kernels", stem_kernels},
            {"fusion", to_string(fusion)},
            {"head_hidden", head_hidden},
            {"input_dim", input_dim},
            {"input_dim_b", input_dim_b}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.dropout = j.value("dropout", c.dropout);
    c.max_t = j.value("max_t", c.max_t);
    if (j.contains("stem_kernels")) c.stem_kernels = j.at("stem_kernels").get<std::vector<int>>();
    if (j.contains("fusion")) c.fusion = parse_fusion(j.at("fusion").get<std::string>());
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.input_dim_b = j.value("input_dim_b", c.input_dim_b);
    return c;
}

std::vector<double> knn_scores(const Matrix& train_x, const std::vector<int>& train_y,
                               const Matrix& test_x, int k) {
    const int n_train = train_x.rows();
    if (static_cast<int>(train_y.size()) != n_train) throw ShapeError("knn label count");
    if (k < 1 || k % 2 == 0) throw ConfigError("k must be odd and >= 1");
    if (k > n_train) throw ConfigError("k exceeds training set size");
    if (test_x.cols() != train_x.cols()) throw ShapeError("knn feature width mismatch");

    std::vector<double> scores(test_x.rows());
    std::vector<std::pair<double, int>> dist(n_train);
    for (int i = 0; i < test_x.rows(); ++i) {
        for (int j = 0; j < n_train; ++j) {
            double d = 0.0;
            const double* a = test_x.row_ptr(i);
            const double* b = train_x.row_ptr(j);
            for (int c = 0; c < train_x.cols(); ++c) {
                double diff = a[c] - b[c];
                d += diff * diff;
            }
            dist[j] = {d, j};
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        int stress = 0;
        for (int j = 0; j < k; ++j) stress += train_y[dist[j].second];
        scores[i] = static_cast<double>(stress) / k;
    }
    return scores;
}

}  // namespace stresskit::model
