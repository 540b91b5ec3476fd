use proxyrecon::proxy::{
    exclude_flagged, load_network_from_readers, screen_replication, write_network, ProxyKind, ProxyNetwork, ProxyRecord,
    TILJANDER_FLAG,
};
use proxyrecon::pseudoproxy::{generate_truth, make_pseudoproxies, PseudoproxySpec, SignalConfig};
use proxyrecon::recon::{reconstruct, HybridConfig, Method, MethodConfig, RegemConfig};
use proxyrecon::skill::score;

#[test]
fn written_network_screens_and_reconstructs_with_every_method() {
    let field = generate_truth(40, (1000, 1980), &SignalConfig::default(), 5).unwrap();
    let proxies = make_pseudoproxies(&field, &PseudoproxySpec::new(24, 1.0, 6)).unwrap();
    let records: Vec<ProxyRecord> = proxies
        .network
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| match i % 4 {
            0 => ProxyRecord::annual(r.id.clone(), ProxyKind::TreeRing, r.series.clone()).with_cores(4),
            1 => ProxyRecord::annual(r.id.clone(), ProxyKind::LakeSediment, r.series.clone()).with_flag(TILJANDER_FLAG),
            _ => ProxyRecord::annual(r.id.clone(), ProxyKind::IceCore, r.series.clone()),
        })
        .collect();
    let net = ProxyNetwork::new(records, 1000).unwrap();

    let (mut meta, mut values) = (Vec::new(), Vec::new());
    write_network(&net, &mut meta, &mut values).unwrap();
    let loaded = load_network_from_readers(meta.as_slice(), "metadata", values.as_slice(), "values", 1000).unwrap();
    assert!(loaded.rejections.is_empty());
    assert_eq!(loaded.network, net);

    let screened = exclude_flagged(&screen_replication(&loaded.network, 8).network, TILJANDER_FLAG).network;
    assert_eq!(screened.len(), 12);

    let truth = field.hemisphere_mean();
    let (cal_mean, _) = truth.mean_over(1856, 1980).unwrap();
    let patient = RegemConfig {
        max_iterations: 5000,
        ..RegemConfig::default()
    };
    let configs = [
        MethodConfig::default_for(Method::OlsPc),
        MethodConfig::default_for(Method::Lasso),
        MethodConfig::Regem(patient.clone()),
        MethodConfig::RegemHybrid(HybridConfig {
            regem: patient,
            ..HybridConfig::default()
        }),
    ];
    for config in &configs {
        let method = config.method();
        let recon = reconstruct(&screened, truth, (1856, 1980), (1000, 1980), config).unwrap();
        assert_eq!(recon.series.span(), (1000, 1980), "{method}");
        assert!(!recon.series.has_missing(), "{method}");
        assert_eq!(recon.model.method, method);
        assert_eq!(recon.model.calibration, (1856, 1980));
        assert!(recon.model.residual_variance >= 0.0);
        match method {
            Method::OlsPc => assert_eq!(recon.model.coefficients.len(), recon.model.k.unwrap()),
            Method::Lasso => assert!(recon.model.lambda.is_some()),
            Method::Regem | Method::RegemHybrid => assert!(recon.model.ridge.is_some()),
        }
        let skill = score(&recon.series, truth, cal_mean, (1856, 1980)).unwrap();
        assert!(skill.re > 0.0, "{method} calibration RE {}", skill.re);
    }
}
