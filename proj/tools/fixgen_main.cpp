// Generates the bundled synthetic dataset: a small orthopedic reference
// corpus, a matching lexicon, 66 labeled cases (11 per class) with
// precomputed image-feature patches, and a ratings file. Deterministic for a
// given seed so the checked-in fixtures can be regenerated byte-identically.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "orthodoc/rand.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using orthodoc::SplitMix64;
using orthodoc::fnv1a64;

namespace {

struct Doc {
    const char* doc_id;
    const char* title;
    const char* source;
    const char* text;
};

const std::vector<Doc>& corpus_docs() {
    static const std::vector<Doc> docs = {
        {"fx_dx", "Wrist fracture presentation", "Orthopedic Reference Compendium",
         "A distal radius fracture commonly follows a fall on an outstretched hand. Sharp wrist "
         "pain, swelling, and visible deformity indicate the fracture."},
        {"fx_tx", "Wrist fracture treatment", "Fracture Management Handbook",
         "A displaced distal radius fracture is treated with closed reduction and cast "
         "immobilization for six weeks. Severe fracture patterns may require surgical fixation "
         "with plates."},
        {"fx_ed", "Wrist fracture aftercare", "Fracture Management Handbook",
         "After cast removal, gradual wrist strengthening exercises restore grip strength. Avoid "
         "heavy lifting until the fracture management plan allows."},
        {"oa_dx", "Knee osteoarthritis presentation", "Orthopedic Reference Compendium",
         "Osteoarthritis of the knee causes aching joint pain and morning stiffness that worsens "
         "with activity. Crepitus and reduced range of motion indicate arthritis."},
        {"oa_tx", "Knee osteoarthritis treatment", "Joint Disease Primer",
         "Knee arthritis is treated with weight management, physiotherapy, and anti-inflammatory "
         "medication. Joint replacement surgery is reserved for advanced arthritis."},
        {"oa_ed", "Knee osteoarthritis self-care", "Joint Disease Primer",
         "Low-impact exercise such as swimming supports arthritis management. Maintain a healthy "
         "weight to reduce load across the knee."},
        {"tm_dx", "Bone tumor presentation", "Orthopedic Reference Compendium",
         "A bone tumor may present with persistent night pain and a palpable mass. A destructive "
         "lesion on imaging indicates a tumor."},
        {"tm_tx", "Bone tumor treatment", "Musculoskeletal Oncology Notes",
         "A confirmed bone tumor is treated with wide surgical resection. Chemotherapy supplements "
         "treatment for aggressive tumor types."},
        {"tm_ed", "Bone tumor surveillance", "Musculoskeletal Oncology Notes",
         "Report new swelling promptly during tumor management. Regular imaging surveillance "
         "follows tumor treatment."},
        {"dl_dx", "Shoulder dislocation presentation", "Orthopedic Reference Compendium",
         "A shoulder dislocation follows forced abduction and external rotation of the arm. A "
         "squared-off shoulder contour and severe pain indicate dislocation."},
        {"dl_tx", "Shoulder dislocation treatment", "Fracture Management Handbook",
         "An acute shoulder dislocation is treated with prompt closed reduction and a sling. "
         "Recurrent dislocation may require stabilization surgery."},
        {"dl_ed", "Shoulder dislocation rehabilitation", "Fracture Management Handbook",
         "Shoulder strengthening exercises reduce recurrence after dislocation. Avoid overhead "
         "throwing during early dislocation management."},
        {"dg_dx", "Degenerative spine presentation", "Orthopedic Reference Compendium",
         "Degenerative disc disease of the lumbar spine causes chronic low back pain that worsens "
         "with sitting. Disc space narrowing indicates degenerative disease."},
        {"dg_tx", "Degenerative spine treatment", "Spine Care Manual",
         "Degenerative disease of the spine is treated with core strengthening, posture training, "
         "and analgesia. Fusion surgery is a last resort for degenerative disease."},
        {"dg_ed", "Degenerative spine self-care", "Spine Care Manual",
         "Regular walking and core exercise support degenerative disease management. Maintain "
         "neutral posture during lifting."},
        {"nm_dx", "Normal study findings", "Orthopedic Reference Compendium",
         "A normal study shows intact cortical bone, preserved joint spaces, and no acute "
         "abnormality. Symmetric alignment indicates a normal examination."},
        {"nm_tx", "Normal study disposition", "Orthopedic Reference Compendium",
         "A normal examination is treated with reassurance and routine activity. No specific "
         "treatment is required after a normal study."},
        {"nm_ed", "Normal study advice", "Orthopedic Reference Compendium",
         "Maintain regular exercise and bone health after a normal study. Return if new symptoms "
         "develop during routine management."},
        {"gen_ct", "CT imaging overview", "Imaging Fundamentals",
         "Computed tomography provides detailed views of cortical and trabecular bone. CT imaging "
         "guides the diagnostic process for orthopedic conditions."},
        {"gen_an", "Regional anatomy overview", "Imaging Fundamentals",
         "The distal radius forms the wrist joint with the carpal bones. The lumbar spine consists "
         "of five vertebrae separated by discs."},
    };
    return docs;
}

struct LexEntry {
    const char* pattern;
    const char* canonical;
    const char* type;
    const char* hint; // nullptr for none
};

const std::vector<LexEntry>& lexicon_entries() {
    static const std::vector<LexEntry> entries = {
        {"fracture", "fracture", "condition", nullptr},
        {"fractures", "fracture", "condition", nullptr},
        {"arthritis", "arthritis", "condition", nullptr},
        {"osteoarthritis", "arthritis", "condition", nullptr},
        {"tumor", "tumor", "condition", nullptr},
        {"tumors", "tumor", "condition", nullptr},
        {"dislocation", "dislocation", "condition", nullptr},
        {"degenerative disease", "degenerative disease", "condition", nullptr},
        {"degenerative disc disease", "degenerative disease", "condition", nullptr},
        {"normal study", "normal", "condition", nullptr},
        {"normal examination", "normal", "condition", nullptr},
        {"distal radius", "distal radius", "anatomy", "located_in"},
        {"wrist", "wrist", "anatomy", "located_in"},
        {"knee", "knee", "anatomy", "located_in"},
        {"shoulder", "shoulder", "anatomy", "located_in"},
        {"lumbar spine", "lumbar spine", "anatomy", "located_in"},
        {"spine", "spine", "anatomy", "located_in"},
        {"cast immobilization", "cast immobilization", "treatment", "treats"},
        {"cast", "cast immobilization", "treatment", "treats"},
        {"closed reduction", "closed reduction", "treatment", "treats"},
        {"physiotherapy", "physiotherapy", "treatment", "treats"},
        {"sling", "sling", "treatment", "treats"},
        {"joint replacement", "joint replacement", "treatment", "treats"},
        {"chemotherapy", "chemotherapy", "treatment", "treats"},
        {"surgical resection", "surgical resection", "treatment", "treats"},
        {"fusion surgery", "fusion surgery", "treatment", "treats"},
        {"analgesia", "analgesia", "treatment", "treats"},
        {"anti-inflammatory medication", "anti-inflammatory medication", "treatment", "treats"},
        {"pain", "pain", "symptom", "indicates"},
        {"swelling", "swelling", "symptom", "indicates"},
        {"deformity", "deformity", "symptom", "indicates"},
        {"stiffness", "stiffness", "symptom", "indicates"},
        {"night pain", "night pain", "symptom", "indicates"},
        {"crepitus", "crepitus", "symptom", "indicates"},
        {"palpable mass", "palpable mass", "symptom", "indicates"},
        {"computed tomography", "computed tomography", "procedure", nullptr},
        {"ct imaging", "computed tomography", "procedure", nullptr},
    };
    return entries;
}

const std::vector<std::string>& class_labels() {
    static const std::vector<std::string> labels = {"fracture",    "arthritis",
                                                    "tumor",       "dislocation",
                                                    "degenerative_disease", "normal"};
    return labels;
}

const char* complaint_for(int cls, int variant) {
    static const char* table[6][3] = {
        {"Severe wrist pain, swelling, and visible deformity after a fall on the outstretched "
         "hand.",
         "Sharp wrist pain and deformity following a fall from a ladder.",
         "Painful swollen wrist with deformity after falling onto an outstretched hand."},
        {"Aching knee pain with morning stiffness that worsens with activity.",
         "Chronic knee pain, stiffness, and crepitus when climbing stairs.",
         "Knee pain with stiffness after rest and reduced walking distance."},
        {"Persistent night pain in the thigh with a palpable mass.",
         "Deep bone pain at night and an enlarging firm mass above the knee.",
         "Unrelenting night pain with a palpable mass near the distal femur."},
        {"Acute shoulder pain with a visibly squared-off shoulder after a fall.",
         "Severe shoulder pain and inability to move the arm after forced external rotation.",
         "Shoulder deformity and pain following a tackle during sport."},
        {"Chronic low back pain that worsens with sitting and bending.",
         "Long-standing low back pain aggravated by prolonged sitting.",
         "Persistent low back stiffness and pain aggravated by bending."},
        {"Routine review with only mild activity-related soreness.",
         "Asymptomatic review after a resolved soft-tissue strain.",
         "Mild transient soreness after exercise with no functional limitation."},
    };
    return table[cls][variant % 3];
}

const char* history_for(int i) {
    static const char* table[] = {
        "No significant prior medical history.",
        "Previously treated for minor sports injuries.",
        "Hypertension controlled with medication.",
        "No prior surgery or hospital admissions.",
    };
    return table[i % 4];
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"orthodoc-fixgen: regenerate the bundled synthetic dataset"};
    std::string out_dir = "data/synthetic";
    std::uint64_t seed = 42;
    int cases_per_class = 11;
    int patches = 16;
    int dim = 32;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--cases-per-class", cases_per_class, "cases per class");
    app.add_option("--patches", patches, "image patches per case");
    app.add_option("--dim", dim, "feature dimension");
    CLI11_PARSE(app, argc, argv);

    fs::create_directories(fs::path(out_dir) / "cases");

    {
        std::ofstream out(fs::path(out_dir) / "corpus.jsonl", std::ios::binary);
        for (const auto& d : corpus_docs()) {
            json j{{"doc_id", d.doc_id}, {"title", d.title}, {"source", d.source}, {"text", d.text}};
            out << j.dump() << "\n";
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "lexicon.jsonl", std::ios::binary);
        for (const auto& e : lexicon_entries()) {
            json j{{"pattern", e.pattern}, {"canonical", e.canonical}, {"type", e.type}};
            if (e.hint) j["rel_hints"] = json::array({e.hint});
            out << j.dump() << "\n";
        }
    }

    // Class prototypes: one fixed direction per class; patches add noise.
    const int num_classes = static_cast<int>(class_labels().size());
    std::vector<std::vector<double>> prototypes;
    for (int c = 0; c < num_classes; ++c) {
        SplitMix64 gen(fnv1a64(class_labels()[static_cast<std::size_t>(c)]) ^ seed);
        std::vector<double> proto(static_cast<std::size_t>(dim));
        for (double& v : proto) v = gen.next_signed();
        prototypes.push_back(std::move(proto));
    }

    static const int ages[] = {23, 34, 41, 47, 52, 58, 63, 69, 71, 36, 45};
    static const char* sexes[] = {"male", "female"};
    static const char* occupations[] = {"carpenter", "teacher",   "farmer", "office worker",
                                        "nurse",     "machinist", "athlete", "electrician"};

    json ratings = json::object();
    const int total = num_classes * cases_per_class;
    for (int i = 0; i < total; ++i) {
        const int cls = i % num_classes;
        const int variant = i / num_classes;
        char case_id[32];
        std::snprintf(case_id, sizeof(case_id), "case_%03d", i);

        SplitMix64 noise(seed ^ fnv1a64(case_id));
        json patches_json = json::array();
        for (int p = 0; p < patches; ++p) {
            json row = json::array();
            for (int k = 0; k < dim; ++k)
                row.push_back(prototypes[static_cast<std::size_t>(cls)][static_cast<std::size_t>(k)] +
                              0.15 * noise.next_signed());
            patches_json.push_back(std::move(row));
        }

        json j;
        j["case_id"] = case_id;
        j["demographics"] = {{"age", ages[variant % 11]},
                             {"sex", sexes[i % 2]},
                             {"occupation", occupations[i % 8]}};
        j["history"] = history_for(i);
        j["complaints"] = complaint_for(cls, variant);
        j["image_patches"] = patches_json;
        j["ground_truth"] = class_labels()[static_cast<std::size_t>(cls)];

        std::ofstream out(fs::path(out_dir) / "cases" / (std::string(case_id) + ".json"),
                          std::ios::binary);
        out << j.dump(2) << "\n";

        ratings[case_id] = 3 + (i % 3);
    }
    {
        std::ofstream out(fs::path(out_dir) / "ratings.json", std::ios::binary);
        out << ratings.dump(2) << "\n";
    }

    std::cerr << "wrote " << corpus_docs().size() << " docs, " << lexicon_entries().size()
              << " lexicon entries, " << total << " cases to " << out_dir << "\n";
    return 0;
}
