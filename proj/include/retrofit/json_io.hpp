#pragma once

// JSON (de)serialization. Matrices travel as {"rows": n, "cols": m,
// "data": [row-major numbers]}, vectors as plain arrays.

#include <string>

#include <Eigen/Dense>
#include "json.hpp"

#include "retrofit/errors.hpp"

namespace retrofit {

using json = nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            data.push_back(m(i, j));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where = "matrix") {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
        throw Error(ErrorCode::ConfigError,
                    where + ": expected {rows, cols, data} matrix object");
    auto rows = j.at("rows").get<Eigen::Index>();
    auto cols = j.at("cols").get<Eigen::Index>();
    const json& data = j.at("data");
    if (rows < 0 || cols < 0 || !data.is_array() ||
        data.size() != static_cast<size_t>(rows * cols))
        throw Error(ErrorCode::ConfigError, where + ": data length must equal rows*cols");
    Eigen::MatrixXd m(rows, cols);
    size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j2 = 0; j2 < cols; ++j2)
            m(i, j2) = data.at(k++).get<double>();
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& where = "vector") {
    if (!j.is_array())
        throw Error(ErrorCode::ConfigError, where + ": expected a JSON array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v(i) = j.at(static_cast<size_t>(i)).get<double>();
    return v;
}

} // namespace retrofit
