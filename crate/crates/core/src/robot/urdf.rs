use std::collections::{HashMap, VecDeque};

use nalgebra::Vector3;
use roxmltree::{Document, Node};

use super::{Joint, JointKind, Limits, Link, LinkSphere, Mimic, ModelError, RobotModel};
use crate::liegroups::{Rotation3, Transform3};

struct RawJoint<'a> {
    name: String,
    kind: JointKind,
    parent: &'a str,
    child: &'a str,
    origin: Transform3,
    axis: Vector3<f64>,
    limits: Option<Limits>,
    velocity_limit: Option<f64>,
    mimic: Option<(String, f64, f64)>,
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn parse_f64(text: &str, what: &str) -> Result<f64, ModelError> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| ModelError::Xml(format!("{what}: `{text}` is not a number")))
}

fn parse_vec3(text: &str, what: &str) -> Result<Vector3<f64>, ModelError> {
    let parts: Vec<f64> = text
        .split_whitespace()
        .map(|t| parse_f64(t, what))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(ModelError::Xml(format!("{what}: expected 3 numbers, got `{text}`"))),
    }
}

fn parse_origin(node: Option<Node>, what: &str) -> Result<Transform3, ModelError> {
    let Some(node) = node else {
        return Ok(Transform3::identity());
    };
    let xyz = match node.attribute("xyz") {
        Some(t) => parse_vec3(t, what)?,
        None => Vector3::zeros(),
    };
    let rpy = match node.attribute("rpy") {
        Some(t) => parse_vec3(t, what)?,
        None => Vector3::zeros(),
    };
    Ok(Transform3::new(Rotation3::from_rpy(rpy.x, rpy.y, rpy.z), xyz))
}

fn attr_f64(node: Node, name: &str, what: &str) -> Result<Option<f64>, ModelError> {
    node.attribute(name).map(|t| parse_f64(t, what)).transpose()
}

fn parse_joint<'a>(node: Node<'a, '_>) -> Result<RawJoint<'a>, ModelError> {
    let name = node
        .attribute("name")
        .ok_or_else(|| ModelError::Xml("joint without a name".into()))?
        .to_string();
    let kind_str = node.attribute("type").unwrap_or("");
    let kind = match kind_str {
        "fixed" => JointKind::Fixed,
        "revolute" => JointKind::Revolute,
        "continuous" => JointKind::Continuous,
        "prismatic" => JointKind::Prismatic,
        other => {
            return Err(ModelError::Unsupported {
                joint: name,
                kind: other.to_string(),
            });
        }
    };
    let link_attr = |tag: &str| {
        child(node, tag)
            .and_then(|c| c.attribute("link"))
            .ok_or_else(|| ModelError::Xml(format!("joint `{name}` is missing <{tag} link=...>")))
    };
    let parent = link_attr("parent")?;
    let child_link = link_attr("child")?;
    let origin = parse_origin(child(node, "origin"), &format!("joint `{name}` origin"))?;

    let axis = match child(node, "axis").and_then(|a| a.attribute("xyz")) {
        Some(t) => parse_vec3(t, &format!("joint `{name}` axis"))?,
        None => Vector3::x(),
    };
    let axis_norm = axis.norm();
    if kind != JointKind::Fixed && !(axis_norm > 1e-12) {
        return Err(ModelError::Validation(format!("joint `{name}` has a zero axis")));
    }
    let axis = if axis_norm > 1e-12 { axis / axis_norm } else { Vector3::x() };

    let (mut limits, mut velocity_limit) = (None, None);
    if let Some(limit) = child(node, "limit") {
        let what = format!("joint `{name}` limit");
        velocity_limit = attr_f64(limit, "velocity", &what)?;
        if matches!(kind, JointKind::Revolute | JointKind::Prismatic) {
            let lower = attr_f64(limit, "lower", &what)?.unwrap_or(0.0);
            let upper = attr_f64(limit, "upper", &what)?.unwrap_or(0.0);
            if lower > upper {
                return Err(ModelError::Validation(format!(
                    "joint `{name}` has lower limit {lower} above upper limit {upper}"
                )));
            }
            limits = Some(Limits { lower, upper });
        }
    }
    if matches!(kind, JointKind::Revolute | JointKind::Prismatic) && limits.is_none() {
        return Err(ModelError::Validation(format!(
            "{kind_str} joint `{name}` has no <limit> element"
        )));
    }

    let mimic = match child(node, "mimic") {
        Some(m) => {
            let what = format!("joint `{name}` mimic");
            let source = m
                .attribute("joint")
                .ok_or_else(|| ModelError::Xml(format!("{what} has no joint attribute")))?;
            Some((
                source.to_string(),
                attr_f64(m, "multiplier", &what)?.unwrap_or(1.0),
                attr_f64(m, "offset", &what)?.unwrap_or(0.0),
            ))
        }
        None => None,
    };

    Ok(RawJoint {
        name,
        kind,
        parent,
        child: child_link,
        origin,
        axis,
        limits,
        velocity_limit,
        mimic,
    })
}

fn parse_link_spheres(node: Node, name: &str) -> Result<Vec<LinkSphere>, ModelError> {
    let mut spheres = Vec::new();
    for collision in node.children().filter(|c| c.has_tag_name("collision")) {
        let Some(sphere) = child(collision, "geometry").and_then(|g| child(g, "sphere")) else {
            continue;
        };
        let what = format!("link `{name}` collision sphere");
        let radius = attr_f64(sphere, "radius", &what)?
            .ok_or_else(|| ModelError::Xml(format!("{what} has no radius")))?;
        if !(radius > 0.0) {
            return Err(ModelError::Validation(format!("{what} radius must be positive")));
        }
        let origin = parse_origin(child(collision, "origin"), &what)?;
        spheres.push(LinkSphere {
            center: origin.translation,
            radius,
        });
    }
    Ok(spheres)
}

/// Parses the supported URDF subset into a topologically ordered tree.
pub fn parse_urdf(document: &str) -> Result<RobotModel, ModelError> {
    let doc = Document::parse(document).map_err(|e| ModelError::Xml(e.to_string()))?;
    let robot = doc.root_element();
    if !robot.has_tag_name("robot") {
        return Err(ModelError::Xml(format!(
            "root element is <{}>, expected <robot>",
            robot.tag_name().name()
        )));
    }
    let robot_name = robot.attribute("name").unwrap_or("robot").to_string();

    let mut link_names: Vec<&str> = Vec::new();
    let mut link_spheres: HashMap<&str, Vec<LinkSphere>> = HashMap::new();
    for node in robot.children().filter(|c| c.has_tag_name("link")) {
        let name = node
            .attribute("name")
            .ok_or_else(|| ModelError::Xml("link without a name".into()))?;
        if link_spheres.contains_key(name) {
            return Err(ModelError::Validation(format!("duplicate link `{name}`")));
        }
        link_spheres.insert(name, parse_link_spheres(node, name)?);
        link_names.push(name);
    }
    if link_names.is_empty() {
        return Err(ModelError::Validation("robot has no links".into()));
    }

    let raw: Vec<RawJoint> = robot
        .children()
        .filter(|c| c.has_tag_name("joint"))
        .map(parse_joint)
        .collect::<Result<_, _>>()?;

    let mut parent_joint_of: HashMap<&str, usize> = HashMap::new();
    let mut children_of: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, joint) in raw.iter().enumerate() {
        for link in [joint.parent, joint.child] {
            if !link_spheres.contains_key(link) {
                return Err(ModelError::Structure {
                    joint: joint.name.clone(),
                    detail: format!("references undeclared link `{link}`"),
                });
            }
        }
        if raw[..j].iter().any(|o| o.name == joint.name) {
            return Err(ModelError::Validation(format!("duplicate joint `{}`", joint.name)));
        }
        if parent_joint_of.insert(joint.child, j).is_some() {
            return Err(ModelError::Structure {
                joint: joint.name.clone(),
                detail: format!("kinematic loop: link `{}` already has a parent joint", joint.child),
            });
        }
        children_of.entry(joint.parent).or_default().push(j);
    }

    let roots: Vec<&str> = link_names
        .iter()
        .copied()
        .filter(|l| !parent_joint_of.contains_key(l))
        .collect();
    let root = match roots.as_slice() {
        [root] => *root,
        [] => {
            return Err(ModelError::Structure {
                joint: raw[0].name.clone(),
                detail: "kinematic loop: no root link".into(),
            });
        }
        many => {
            return Err(ModelError::Validation(format!(
                "expected a single root link, found {}: {}",
                many.len(),
                many.join(", ")
            )));
        }
    };

    // Breadth-first from the root gives parents before children.
    let mut link_order: Vec<&str> = vec![root];
    let mut joint_order: Vec<usize> = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(link) = queue.pop_front() {
        for &j in children_of.get(link).map(Vec::as_slice).unwrap_or(&[]) {
            joint_order.push(j);
            link_order.push(raw[j].child);
            queue.push_back(raw[j].child);
        }
    }
    if let Some(j) = (0..raw.len()).find(|j| !joint_order.contains(j)) {
        return Err(ModelError::Structure {
            joint: raw[j].name.clone(),
            detail: "kinematic loop: joint is not reachable from the root link".into(),
        });
    }

    let link_idx: HashMap<&str, usize> = link_order.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let joint_idx: HashMap<&str, usize> = joint_order
        .iter()
        .enumerate()
        .map(|(i, &j)| (raw[j].name.as_str(), i))
        .collect();

    let mut joints = Vec::with_capacity(raw.len());
    for &j in &joint_order {
        let r = &raw[j];
        let mimic = match &r.mimic {
            None => None,
            Some((source, multiplier, offset)) => {
                let &source_idx = joint_idx.get(source.as_str()).ok_or_else(|| {
                    ModelError::Validation(format!(
                        "joint `{}` mimics unknown joint `{source}`",
                        r.name
                    ))
                })?;
                let src = &raw[joint_order[source_idx]];
                if src.mimic.is_some() {
                    return Err(ModelError::Validation(format!(
                        "mimic chain: joint `{}` mimics `{source}`, which is itself a mimic joint",
                        r.name
                    )));
                }
                if src.kind == JointKind::Fixed {
                    return Err(ModelError::Validation(format!(
                        "joint `{}` mimics fixed joint `{source}`",
                        r.name
                    )));
                }
                (r.kind != JointKind::Fixed).then_some(Mimic {
                    source: source_idx,
                    multiplier: *multiplier,
                    offset: *offset,
                })
            }
        };
        joints.push(Joint {
            name: r.name.clone(),
            kind: r.kind,
            parent_link: link_idx[r.parent],
            child_link: link_idx[r.child],
            origin: r.origin,
            axis: r.axis,
            limits: r.limits,
            velocity_limit: r.velocity_limit,
            mimic,
        });
    }

    let mut links: Vec<Link> = link_order
        .iter()
        .map(|&name| Link {
            name: name.to_string(),
            parent_joint: None,
        })
        .collect();
    for (j, joint) in joints.iter().enumerate() {
        links[joint.child_link].parent_joint = Some(j);
    }
    let spheres = link_order
        .iter()
        .map(|l| link_spheres.remove(l).unwrap_or_default())
        .collect();

    Ok(RobotModel::assemble(robot_name, links, joints, spheres))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn urdf(joints: &str) -> String {
        format!(
            r#"<robot name="t">
                <link name="a"/><link name="b"/><link name="c"/>
                {joints}
            </robot>"#
        )
    }

    const REV_AB: &str = r#"<joint name="j1" type="revolute"><parent link="a"/><child link="b"/>
        <axis xyz="0 0 2"/><limit lower="-1" upper="1" velocity="2"/></joint>"#;

    #[test]
    fn single_revolute() {
        let doc = r#"<robot name="r"><link name="a"/><link name="b"/>"#.to_string() + REV_AB + "</robot>";
        let m = parse_urdf(&doc).unwrap();
        assert_eq!(m.actuated_count(), 1);
        assert_eq!(m.joints[0].axis, Vector3::z());
        assert_eq!(m.joints[0].velocity_limit, Some(2.0));
        assert_eq!(m.links[0].name, "a");
    }

    #[test]
    fn topological_order_regardless_of_declaration_order() {
        let doc = urdf(
            r#"<joint name="j2" type="continuous"><parent link="b"/><child link="c"/></joint>"#,
        ) .replace("</robot>", &format!("{REV_AB}</robot>"));
        let m = parse_urdf(&doc).unwrap();
        assert_eq!(m.joints[0].name, "j1");
        assert_eq!(m.joints[1].name, "j2");
        assert!(m.joints[1].limits.is_none());
        for j in &m.joints {
            assert!(j.parent_link < j.child_link);
        }
    }

    #[test]
    fn loop_is_structural_error_naming_joint() {
        let doc = urdf(&format!(
            r#"{REV_AB}<joint name="jc" type="fixed"><parent link="a"/><child link="c"/></joint>
               <joint name="jloop" type="fixed"><parent link="c"/><child link="b"/></joint>"#
        ));
        match parse_urdf(&doc) {
            Err(ModelError::Structure { joint, .. }) => assert_eq!(joint, "jloop"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_joint_types() {
        for kind in ["planar", "floating"] {
            let doc = urdf(&format!(
                r#"<joint name="x" type="{kind}"><parent link="a"/><child link="b"/></joint>
                   <joint name="y" type="fixed"><parent link="b"/><child link="c"/></joint>"#
            ));
            assert!(matches!(parse_urdf(&doc), Err(ModelError::Unsupported { .. })));
        }
    }

    #[test]
    fn missing_limits_rejected() {
        let doc = urdf(
            r#"<joint name="p" type="prismatic"><parent link="a"/><child link="b"/></joint>
               <joint name="y" type="fixed"><parent link="b"/><child link="c"/></joint>"#,
        );
        assert!(matches!(parse_urdf(&doc), Err(ModelError::Validation(_))));
    }

    #[test]
    fn mimic_chain_rejected() {
        let doc = urdf(&format!(
            r#"{REV_AB}<joint name="m1" type="revolute"><parent link="b"/><child link="c"/>
                 <limit lower="-1" upper="1"/><mimic joint="j1"/></joint>"#
        ))
        .replace(
            "</robot>",
            r#"<link name="d"/><joint name="m2" type="revolute"><parent link="c"/><child link="d"/>
               <limit lower="-1" upper="1"/><mimic joint="m1"/></joint></robot>"#,
        );
        match parse_urdf(&doc) {
            Err(ModelError::Validation(msg)) => assert!(msg.contains("mimic chain"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn multiple_roots_and_bad_xml() {
        let doc = urdf(REV_AB);
        assert!(matches!(parse_urdf(&doc), Err(ModelError::Validation(_))));
        assert!(matches!(parse_urdf("<robot"), Err(ModelError::Xml(_))));
        assert!(matches!(parse_urdf("<notrobot/>"), Err(ModelError::Xml(_))));
    }

    #[test]
    fn sphere_collisions_are_read() {
        let doc = r#"<robot name="s"><link name="a">
              <collision><origin xyz="0 0 0.5"/><geometry><sphere radius="0.1"/></geometry></collision>
              <collision><geometry><box size="1 1 1"/></geometry></collision>
            </link></robot>"#;
        let m = parse_urdf(doc).unwrap();
        assert_eq!(m.collision_spheres[0], vec![LinkSphere { center: Vector3::new(0.0, 0.0, 0.5), radius: 0.1 }]);
        assert_eq!(m.actuated_count(), 0);
    }
}
