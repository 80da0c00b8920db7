#include <stdio.h>
#include <string.h>

#include "spatial_lgm.h"

static const char *GRAPH = "a: b\nb: a c\nc: b\n";
static const char *CONFIG = "[model]\nfamily = \"logit\"\neffect = \"icar\"\ncovariates = []\n";

int main(void) {
    SlgmGraph *graph = NULL;
    SlgmModel *model = NULL;
    SlgmFit *fit = NULL;
    char data[8192];
    size_t used = (size_t)snprintf(data, sizeof data, "region,y\n");
    for (int i = 0; i < 300; i++) {
        used += (size_t)snprintf(data + used, sizeof data - used, "%c,%d\n", 'a' + i % 3, (i * 7) % 5 < 2);
    }
    if (slgm_graph_parse(GRAPH, &graph) != SLGM_OK) return 1;
    if (slgm_model_new(CONFIG, data, graph, &model) != SLGM_OK) return 2;
    slgm_graph_free(graph);
    if (slgm_fit(model, &fit) != SLGM_OK) return 3;

    double sum = 0.0;
    size_t count = slgm_fit_parameter_count(fit);
    for (size_t i = 0; i < count; i++) {
        char name[64];
        SlgmSummary s;
        if (slgm_fit_parameter_name(fit, i, name, sizeof name, NULL) != SLGM_OK) return 4;
        if (slgm_fit_summary(fit, i, &s) != SLGM_OK) return 5;
        if (strncmp(name, "gamma_", 6) == 0) sum += s.mean;
        printf("%s %.6f\n", name, s.mean);
    }
    if (sum > 1e-8 || sum < -1e-8) return 6;

    SlgmSummary s;
    if (slgm_fit_summary(fit, count, &s) != SLGM_ERR_OUT_OF_RANGE) return 7;
    size_t needed = 0;
    slgm_last_error_message(NULL, 0, &needed);
    if (needed < 2) return 8;

    slgm_fit_free(fit);
    slgm_model_free(model);
    printf("version %s ok\n", slgm_version());
    return 0;
}
