#pragma once

#include <string>

namespace resdecomp {

// fn(name, rows, cols, std::vector<float>&) -- vectors are reported as [len x 1].
template <class W, class F>
void for_each_tensor(W& weights, F&& fn) {
    fn(std::string("token_embedding"), weights.token_embedding.rows(),
       weights.token_embedding.cols(), weights.token_embedding.data());
    fn(std::string("position_embedding"), weights.position_embedding.rows(),
       weights.position_embedding.cols(), weights.position_embedding.data());
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        auto& layer = weights.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        fn(p + "ln1_gamma", layer.ln1_gamma.size(), std::size_t{1}, layer.ln1_gamma);
        fn(p + "w_q", layer.w_q.rows(), layer.w_q.cols(), layer.w_q.data());
        fn(p + "w_k", layer.w_k.rows(), layer.w_k.cols(), layer.w_k.data());
        fn(p + "w_v", layer.w_v.rows(), layer.w_v.cols(), layer.w_v.data());
        fn(p + "w_o", layer.w_o.rows(), layer.w_o.cols(), layer.w_o.data());
        fn(p + "ln2_gamma", layer.ln2_gamma.size(), std::size_t{1}, layer.ln2_gamma);
        fn(p + "w_up", layer.w_up.rows(), layer.w_up.cols(), layer.w_up.data());
        fn(p + "w_down", layer.w_down.rows(), layer.w_down.cols(), layer.w_down.data());
    }
    fn(std::string("final_gamma"), weights.final_gamma.size(), std::size_t{1},
       weights.final_gamma);
    fn(std::string("output_embedding"), weights.output_embedding.rows(),
       weights.output_embedding.cols(), weights.output_embedding.data());
}

}  // namespace resdecomp
